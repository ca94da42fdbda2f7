"""Tests for the finite-width Monte-Carlo validator.

Oracles:
- [TRIVIAL] exact orthogonality/scaling identities of the samplers.
- [DERIVED] an identity network with orthogonal weights preserves cosines
  and squared norms exactly (no randomness in the statistic), so the
  empirical trace must match theory to rounding error.
- statistical checks use wide layers and loose tolerances so they are
  deterministic given the fixed seeds.
"""

import math

import numpy as np
import pytest

from qcmap import (
    EmpiricalTrace,
    Identity,
    InitScheme,
    SimConfig,
    TReLU,
    compare_to_theory,
    lrelu_c_map,
    make_input_pair,
    propagate_pair,
    run_simulation,
    sample_weight_matrix,
    theory_trace,
)
from qcmap.finite_width import _apply_fresh_suo


RNG = lambda s=0: np.random.default_rng(s)


class TestSampleWeightMatrix:
    def test_suo_square_orthogonal(self):
        w = sample_weight_matrix(InitScheme.SUO, 64, 64, RNG())
        assert np.max(np.abs(w @ w.T - np.eye(64))) <= 1e-10

    def test_suo_wide_rows_orthonormal(self):
        # m < k: rows orthonormal, no scaling
        w = sample_weight_matrix(InitScheme.SUO, 32, 64, RNG(1))
        assert np.max(np.abs(w @ w.T - np.eye(32))) <= 1e-10

    def test_suo_tall_column_scaling(self):
        # m > k: columns orthogonal with norm sqrt(m/k)
        w = sample_weight_matrix(InitScheme.SUO, 128, 64, RNG(2))
        assert np.max(np.abs(w.T @ w - 2.0 * np.eye(64))) <= 1e-10

    def test_suo_preserves_scaled_norm(self):
        # ||W x||^2 / m == ||x||^2 / k for any x when m >= k
        w = sample_weight_matrix(InitScheme.SUO, 100, 40, RNG(3))
        x = RNG(4).normal(size=40)
        assert np.linalg.norm(w @ x) ** 2 / 100 == pytest.approx(
            np.linalg.norm(x) ** 2 / 40, rel=1e-12
        )

    def test_gaussian_variance(self):
        w = sample_weight_matrix(InitScheme.GAUSSIAN_FAN_IN, 400, 500, RNG(5))
        assert w.var() == pytest.approx(1.0 / 500, rel=0.02)
        assert w.mean() == pytest.approx(0.0, abs=1e-3)

    def test_bad_dimensions_rejected(self):
        with pytest.raises(ValueError):
            sample_weight_matrix(InitScheme.SUO, 0, 4, RNG())

    def test_determinism(self):
        a = sample_weight_matrix(InitScheme.SUO, 16, 16, RNG(7))
        b = sample_weight_matrix(InitScheme.SUO, 16, 16, RNG(7))
        assert np.array_equal(a, b)


class TestApplyFreshSuo:
    def test_matches_explicit_multiply_in_law(self):
        # exact invariants: norms and pairwise inner products preserved
        x = RNG(8).normal(size=(50, 6))
        y = _apply_fresh_suo(x, RNG(9))
        assert np.max(np.abs(x.T @ x - y.T @ y)) <= 1e-10

    def test_marginal_is_isotropic(self):
        # a fixed unit vector maps to a uniformly random unit vector: its
        # first coordinate has mean 0 and variance 1/n
        n, reps = 25, 4000
        rng = RNG(10)
        e = np.zeros((n, 1))
        e[0, 0] = 1.0
        firsts = np.array([_apply_fresh_suo(e, rng)[0, 0] for _ in range(reps)])
        assert firsts.mean() == pytest.approx(0.0, abs=0.02)
        assert firsts.var() == pytest.approx(1.0 / n, rel=0.15)


class TestMakeInputPair:
    @pytest.mark.parametrize("c0", [-1.0, -0.5, 0.0, 0.3, 1.0])
    def test_exact_geometry(self, c0):
        x1, x2 = make_input_pair(200, c0, RNG(11))
        assert np.linalg.norm(x1) ** 2 == pytest.approx(200, rel=1e-12)
        assert np.linalg.norm(x2) ** 2 == pytest.approx(200, rel=1e-12)
        cos = x1 @ x2 / (np.linalg.norm(x1) * np.linalg.norm(x2))
        assert cos == pytest.approx(c0, abs=1e-12)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            make_input_pair(10, 1.2, RNG())


class TestPropagatePair:
    def test_identity_suo_preserves_statistics(self):
        x1, x2 = make_input_pair(64, 0.4, RNG(12))
        stats = propagate_pair(Identity(), InitScheme.SUO, 64, 5, x1, x2, RNG(13))
        for q1, q2, c in stats:
            assert q1 == pytest.approx(1.0, abs=1e-12)
            assert q2 == pytest.approx(1.0, abs=1e-12)
            assert c == pytest.approx(0.4, abs=1e-12)

    def test_layer_count_and_c_range(self):
        x1, x2 = make_input_pair(32, 0.0, RNG(14))
        stats = propagate_pair(TReLU(0.3), InitScheme.GAUSSIAN_FAN_IN, 32, 4, x1, x2, RNG(15))
        assert len(stats) == 5
        assert all(-1.0 <= c <= 1.0 for _, _, c in stats)

    def test_mismatched_inputs_rejected(self):
        with pytest.raises(ValueError):
            propagate_pair(
                Identity(), InitScheme.SUO, 8, 1,
                np.zeros(8), np.zeros(9), RNG(),
            )


class TestRunSimulation:
    def test_identity_suo_exact(self):
        cfg = SimConfig(width=48, depth=6, trials=3, pairs_per_trial=2, seed=0,
                        initial_c=0.25)
        trace = run_simulation(cfg, Identity(), InitScheme.SUO)
        assert np.max(np.abs(trace.mean_c - 0.25)) <= 1e-12
        assert np.max(trace.std_c) <= 1e-12
        assert np.max(np.abs(trace.mean_q - 1.0)) <= 1e-12

    def test_deterministic_given_seed(self):
        cfg = SimConfig(width=24, depth=3, trials=2, pairs_per_trial=2, seed=42)
        a = run_simulation(cfg, TReLU(0.2), InitScheme.GAUSSIAN_FAN_IN)
        b = run_simulation(cfg, TReLU(0.2), InitScheme.GAUSSIAN_FAN_IN)
        assert np.array_equal(a.mean_c, b.mean_c)
        assert np.array_equal(a.std_c, b.std_c)

    def test_seed_changes_result(self):
        k = dict(width=24, depth=3, trials=2, pairs_per_trial=2)
        a = run_simulation(SimConfig(seed=1, **k), TReLU(0.2), InitScheme.GAUSSIAN_FAN_IN)
        b = run_simulation(SimConfig(seed=2, **k), TReLU(0.2), InitScheme.GAUSSIAN_FAN_IN)
        assert not np.array_equal(a.mean_c, b.mean_c)

    def test_statistics_shapes_and_ranges(self):
        cfg = SimConfig(width=64, depth=4, trials=2, pairs_per_trial=3, seed=3)
        trace = run_simulation(cfg, TReLU(0.5), InitScheme.SUO)
        assert trace.depth == 4
        assert trace.mean_c.shape == (5,)
        assert np.all(np.abs(trace.mean_c) <= 1.0)
        assert trace.mean_c[0] == pytest.approx(0.0, abs=1e-12)

    def test_wide_net_tracks_theory(self):
        alpha = 0.4
        cfg = SimConfig(width=400, depth=8, trials=20, pairs_per_trial=4, seed=7)
        trace = run_simulation(cfg, TReLU(alpha), InitScheme.GAUSSIAN_FAN_IN)
        report = compare_to_theory(trace, 8, lambda c: lrelu_c_map(alpha, c))
        assert report.max_abs_deviation <= 0.03
        assert report.theory_c[0] == 0.0

    def test_invalid_config_rejected(self):
        with pytest.raises(ValueError):
            SimConfig(width=0, depth=1, trials=1, pairs_per_trial=1, seed=0)
        with pytest.raises(ValueError):
            SimConfig(width=2, depth=1, trials=1, pairs_per_trial=1, seed=0,
                      initial_c=1.5)


class TestTheoryAndComparison:
    def test_theory_trace_iterates_map(self):
        out = theory_trace(lambda c: 0.5 * c + 0.5, 0.0, 3)
        assert out == pytest.approx([0.0, 0.5, 0.75, 0.875], abs=1e-15)

    def test_identity_deviation_zero(self):
        trace = EmpiricalTrace(
            mean_c=np.array([0.2, 0.6, 0.8]),
            std_c=np.array([0.0, 0.01, 0.01]),
            mean_q=np.ones(3),
            initial_c=0.2,
        )
        report = compare_to_theory(trace, 2, lambda c: 0.5 * c + 0.5)
        assert report.max_abs_deviation <= 1e-15
        assert report.within_one_std_fraction == 1.0

    def test_depth_mismatch_rejected(self):
        trace = EmpiricalTrace(
            mean_c=np.zeros(3), std_c=np.zeros(3), mean_q=np.ones(3),
            initial_c=0.0,
        )
        with pytest.raises(ValueError):
            compare_to_theory(trace, 5, lambda c: c)
