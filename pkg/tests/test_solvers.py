"""Tests for the transformation solvers and their numerical kit.

Oracles:
- [DERIVED] leaky-ReLU global map values via an inline arccosine-kernel
  composition written independently of the library code.
- [DERIVED] edge-of-chaos constants for tanh, frozen from a trapezoid-rule
  oracle on 400001 points (fixed point solved by damped iteration).
- [TRIVIAL] algebraic identities (slope of identity, zeta = m**L, etc.).
"""

import math

import numpy as np
import pytest

from qcmap import (
    BracketError,
    Identity,
    LocalMapParams,
    QuadratureRule,
    ReLU,
    SoftPlus,
    SolverFailure,
    Tanh,
    TReLU,
    UnattainableTargetError,
    UnsupportedDerivativeError,
    bisect,
    build_rescaled_resnet,
    build_vanilla,
    cstats,
    default_rule,
    eoc_lrelu,
    eval_M,
    local_c,
    solve_dks,
    solve_eoc_smooth,
    solve_nonlinear_system,
    solve_tat_lrelu,
    solve_tat_smooth,
)
from qcmap.solvers import max_c_value

RULE = default_rule()


def oracle_lrelu_map(alpha, c):
    """Independent arccosine-kernel form of the rescaled leaky-ReLU C map."""
    k = (1.0 - alpha) ** 2 / (math.pi * (1.0 + alpha * alpha))
    return c + k * (math.sqrt(max(0.0, 1.0 - c * c)) - c * math.acos(min(1.0, max(-1.0, c))))


def oracle_vanilla_c0(alpha, depth):
    c = 0.0
    for _ in range(depth):
        c = oracle_lrelu_map(alpha, c)
    return c


class TestBisect:
    def test_finds_cosine_root(self):
        assert bisect(math.cos, 0.0, 2.0) == pytest.approx(math.pi / 2, abs=1e-9)

    def test_exact_root_at_endpoint(self):
        assert bisect(lambda x: x - 1.0, 1.0, 3.0) == 1.0
        assert bisect(lambda x: x - 3.0, 1.0, 3.0) == 3.0

    def test_no_sign_change_raises(self):
        with pytest.raises(BracketError):
            bisect(lambda x: x * x + 1.0, -1.0, 1.0)

    def test_decreasing_function(self):
        assert bisect(lambda x: 1.0 - x * x, 0.0, 5.0) == pytest.approx(1.0, abs=1e-10)


class TestSolveNonlinearSystem:
    def test_two_dimensional_root(self):
        def F(v):
            x, y = v
            return np.array([x * x + y - 3.0, x + y * y - 5.0])

        root = solve_nonlinear_system(F, (1.0, 1.0))
        assert np.max(np.abs(F(root))) <= 1e-10

    def test_linear_system_one_step(self):
        A = np.array([[2.0, 1.0], [1.0, 3.0]])
        b = np.array([1.0, 2.0])
        root = solve_nonlinear_system(lambda v: A @ v - b, (0.0, 0.0))
        assert root == pytest.approx(np.linalg.solve(A, b), abs=1e-9)

    def test_stalled_search_raises(self):
        # gradient is zero everywhere except the (unreachable) minimum
        with pytest.raises(SolverFailure):
            solve_nonlinear_system(lambda v: np.array([1.0 + 0.0 * v[0]]), (0.0,))


class TestMaxCValue:
    @pytest.mark.parametrize("depth", [1, 2, 3, 10, 13])
    def test_vanilla_matches_inline_composition(self, depth):
        g = build_vanilla(depth)
        for alpha in (0.0, 0.25, 0.6):
            assert max_c_value(g, alpha) == pytest.approx(
                oracle_vanilla_c0(alpha, depth), abs=1e-12
            )

    def test_relu_depth_values(self):
        # frozen iterates of the relu arccosine map starting from 0
        g = lambda L: max_c_value(build_vanilla(L), 0.0)
        assert g(1) == pytest.approx(1.0 / math.pi, abs=1e-12)
        assert g(10) == pytest.approx(0.8715355160, abs=1e-9)
        assert g(13) == pytest.approx(0.9070988508, abs=1e-9)

    def test_decreasing_in_alpha(self):
        g = build_vanilla(6)
        values = [max_c_value(g, a) for a in (0.0, 0.2, 0.5, 0.8, 0.99)]
        assert all(a > b for a, b in zip(values, values[1:]))
        assert max_c_value(g, 1.0) == pytest.approx(0.0, abs=1e-12)


class TestSolveTatLrelu:
    def test_vanilla_round_trip(self):
        g = build_vanilla(5)
        sol = solve_tat_lrelu(g, 0.5)
        assert 0.0 < sol.alpha < 1.0
        assert sol.achieved_eta == pytest.approx(0.5, abs=1e-6)
        assert oracle_vanilla_c0(sol.alpha, 5) == pytest.approx(0.5, abs=1e-6)

    def test_deep_vanilla_high_eta(self):
        sol = solve_tat_lrelu(build_vanilla(13), 0.9)
        assert oracle_vanilla_c0(sol.alpha, 13) == pytest.approx(0.9, abs=1e-6)

    def test_resnet_round_trip(self):
        g = build_rescaled_resnet(4, 0.8)
        # the 3-layer branch dominates: max eta is 0.6048 at alpha = 0
        assert max_c_value(g, 0.0) == pytest.approx(0.6048257201, abs=1e-9)
        sol = solve_tat_lrelu(g, 0.55)
        assert max_c_value(g, sol.alpha) == pytest.approx(0.55, abs=1e-6)

    def test_unattainable_eta_raises_with_max_value(self):
        g = build_vanilla(10)
        with pytest.raises(UnattainableTargetError) as exc:
            solve_tat_lrelu(g, 0.9)
        assert "unattainable target; max C_f(0)=" in str(exc.value)
        assert exc.value.max_value == pytest.approx(0.8715355160, abs=1e-9)

    @pytest.mark.parametrize("eta", [0.0, 1.0, -0.3, 1.5])
    def test_eta_outside_open_interval_rejected(self, eta):
        with pytest.raises(ValueError):
            solve_tat_lrelu(build_vanilla(3), eta)

    def test_determinism(self):
        g = build_vanilla(7)
        assert solve_tat_lrelu(g, 0.6) == solve_tat_lrelu(g, 0.6)


def transformed_stats(sol, order=120):
    rule = QuadratureRule.gauss_hermite(order)
    return cstats(LocalMapParams(sol.activation), rule)


class TestSolveTatSmooth:
    @pytest.mark.parametrize("tau", [0.2, 0.3, 0.5])
    @pytest.mark.parametrize("base", [SoftPlus(), Tanh()])
    def test_moment_round_trip_vanilla(self, base, tau):
        depth = 8
        sol = solve_tat_smooth(build_vanilla(depth), base, tau)
        assert sol.residual_norm <= 1e-8
        assert sol.target_local_cpp1 == pytest.approx(tau / depth, abs=1e-13)
        s = transformed_stats(sol)
        assert s.q1 == pytest.approx(1.0, abs=1e-8)
        assert s.qp1 == pytest.approx(1.0, abs=1e-8)
        assert s.cp1 == pytest.approx(1.0, abs=1e-8)
        assert s.cpp1 == pytest.approx(tau / depth, abs=1e-8)

    def test_resnet_curvature_budget(self):
        # curvature accumulates as max(branch depth, total * (1 - w^2))
        g = build_rescaled_resnet(10, 0.5)
        m = eval_M(g, lambda x: 1.0 + x, 0.0)
        assert m == pytest.approx(max(3.0, 30.0 * 0.75), abs=1e-12)
        sol = solve_tat_smooth(g, SoftPlus(), 0.3)
        assert sol.target_local_cpp1 == pytest.approx(0.3 / m, abs=1e-13)

    def test_shortcut_dominated_resnet(self):
        g = build_rescaled_resnet(10, 0.99)
        m = eval_M(g, lambda x: 1.0 + x, 0.0)
        assert m == pytest.approx(3.0, abs=1e-12)

    def test_non_smooth_base_rejected(self):
        with pytest.raises(UnsupportedDerivativeError):
            solve_tat_smooth(build_vanilla(3), ReLU(), 0.3)

    @pytest.mark.parametrize("tau", [0.0, -1.0])
    def test_nonpositive_tau_rejected(self, tau):
        with pytest.raises(ValueError):
            solve_tat_smooth(build_vanilla(3), Tanh(), tau)


class TestSolveDks:
    @pytest.mark.parametrize("base", [SoftPlus(), Tanh()])
    def test_moment_round_trip_vanilla(self, base):
        depth = 6
        sol = solve_dks(build_vanilla(depth), base, 1.5)
        assert sol.residual_norm <= 1e-8
        # slope composes multiplicatively through a chain
        assert sol.target_local_cp1 == pytest.approx(1.5 ** (1.0 / depth), abs=1e-10)
        s = transformed_stats(sol)
        assert s.q1 == pytest.approx(1.0, abs=1e-8)
        assert s.qp1 == pytest.approx(1.0, abs=1e-8)
        assert s.cp1 == pytest.approx(sol.target_local_cp1, abs=1e-8)
        assert s.c0 == pytest.approx(0.0, abs=1e-8)

    def test_global_map_hits_targets(self):
        depth = 6
        sol = solve_dks(build_vanilla(depth), SoftPlus(), 1.5)
        rule = QuadratureRule.gauss_hermite(120)
        p = LocalMapParams(sol.activation)
        # C_f(0) = 0 because the local map sends 0 to 0
        c = 0.0
        for _ in range(depth):
            c = local_c(p, rule, c, 1.0, 1.0)
        assert c == pytest.approx(0.0, abs=1e-7)

    def test_zeta_not_above_one_rejected(self):
        with pytest.raises(ValueError):
            solve_dks(build_vanilla(3), Tanh(), 1.0)

    def test_non_smooth_base_rejected(self):
        with pytest.raises(UnsupportedDerivativeError):
            solve_dks(build_vanilla(3), ReLU(), 1.5)


class TestSolveEocSmooth:
    def test_tanh_small_bias(self):
        # frozen trapezoid-rule oracle: sigma_w = 1.0667830930 at sigma_b = 0.02
        sol = solve_eoc_smooth(Tanh(), sigma_b=0.02)
        assert sol.sigma_w == pytest.approx(1.0667830930, abs=1e-6)
        assert sol.q_fixed_point == pytest.approx(0.0758641, abs=1e-4)

    def test_tanh_larger_bias(self):
        # frozen trapezoid-rule oracle: sigma_w = 1.3041458400 at sigma_b = 0.2
        sol = solve_eoc_smooth(Tanh(), sigma_b=0.2)
        assert sol.sigma_w == pytest.approx(1.3041458400, abs=1e-6)
        assert sol.q_fixed_point == pytest.approx(0.5120, abs=1e-3)

    def test_tanh_slope_condition_holds(self):
        sol = solve_eoc_smooth(Tanh(), sigma_b=0.2)
        s = math.sqrt(sol.q_fixed_point)
        chi = sol.sigma_w**2 * RULE.expect(
            lambda z: np.cosh(s * z) ** -4.0, kinks=(0.0,)
        )
        assert chi == pytest.approx(1.0, abs=1e-8)

    def test_identity_edge_at_unit_weight_variance(self):
        sol = solve_eoc_smooth(Identity(), sigma_b=0.0)
        assert sol.sigma_w == pytest.approx(1.0, abs=1e-3)

    def test_non_smooth_base_rejected(self):
        with pytest.raises(UnsupportedDerivativeError):
            solve_eoc_smooth(ReLU())


class TestEocLrelu:
    def test_relu_scale(self):
        sol = eoc_lrelu(0.0)
        assert sol.sigma_w == pytest.approx(math.sqrt(2.0), abs=1e-15)
        assert sol.q_fixed_point == 1.0

    @pytest.mark.parametrize("alpha", [0.0, 0.3, 0.7, 1.0])
    def test_scaled_lrelu_sits_on_edge(self, alpha):
        sol = eoc_lrelu(alpha)
        # sigma_w^2 E[phi'(z)^2] = sigma_w^2 (1 + alpha^2) / 2 = 1
        assert sol.sigma_w**2 * (1 + alpha * alpha) / 2.0 == pytest.approx(
            1.0, abs=1e-14
        )
        # and the q map is exactly the identity: Q(q) = q
        p = LocalMapParams(TReLU(alpha))
        from qcmap import local_q

        for q in (0.25, 1.0, 4.0):
            assert local_q(p, RULE, q) == pytest.approx(q, abs=1e-10)


class TestSolutionSerialization:
    def test_tat_lrelu_dict(self):
        d = solve_tat_lrelu(build_vanilla(5), 0.5).to_dict()
        assert d["method"] == "tat-lrelu"
        assert set(d) == {"method", "activation", "parameters", "targets", "residuals"}

    def test_eoc_dict(self):
        d = eoc_lrelu(0.2).to_dict()
        assert d["method"] == "eoc"
        assert d["parameters"]["sigma_b"] == 0.0
