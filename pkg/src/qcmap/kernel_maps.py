"""Local and global Q/C maps.

Leaky-ReLU maps are evaluated in closed form; everything else goes through
quadrature against the standard Gaussian density.  Smooth activations use
Gauss-Hermite directly.  Activations with kinks get a composite
Gauss-Legendre scheme split at the kink locations, since Gauss-Hermite
converges only polynomially on non-smooth integrands.  The 2-D expectations
use the substitution z2' = c z1 + sqrt(1 - c^2) z2.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .activations import Activation
from .errors import DomainError, UnsupportedDerivativeError
from .netgraph import NetworkGraph, eval_U

__all__ = [
    "QuadratureRule",
    "LocalMapParams",
    "CStats",
    "default_rule",
    "lrelu_c_map",
    "lrelu_c_map_derivative",
    "local_q",
    "local_c",
    "local_c_derivative",
    "global_c",
    "cstats",
]

DEFAULT_QUAD_ORDER = 60

# Gaussian tails beyond this are ~1e-31 even against quadratic growth
_TRUNC = 12.0
# one panel per side of a split point is enough: Gauss-Legendre nodes
# cluster quadratically at panel edges, which is exactly where the
# integrands concentrate (activation kinks and the origin)
_MAX_PANEL_WIDTH = 12.0


@lru_cache(maxsize=32)
def _leggauss(order: int):
    return np.polynomial.legendre.leggauss(order)


def _gauss_density(x):
    return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _segment_nodes(lo, hi, order: int, n_panels: int):
    """Composite Gauss-Legendre nodes/weights (Gaussian density folded in).

    lo/hi broadcast; returns arrays of shape broadcast(lo, hi) + (n_panels * order,).
    """
    gx, gw = _leggauss(order)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    frac = np.linspace(0.0, 1.0, n_panels + 1)
    edges = lo[..., None] + (hi - lo)[..., None] * frac
    a, b = edges[..., :-1, None], edges[..., 1:, None]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    x = mid + half * gx
    w = half * gw * _gauss_density(x)
    out_shape = x.shape[:-2] + (n_panels * order,)
    return x.reshape(out_shape), w.reshape(out_shape)


@lru_cache(maxsize=256)
def _piecewise_1d(kinks, order: int):
    """1-D nodes/weights on [-T, T] split at the kinks."""
    pts = [-_TRUNC]
    pts += sorted(k for k in kinks if -_TRUNC < k < _TRUNC)
    pts.append(_TRUNC)
    xs, ws = [], []
    for lo, hi in zip(pts[:-1], pts[1:]):
        if hi <= lo:
            continue
        n_panels = max(1, math.ceil((hi - lo) / _MAX_PANEL_WIDTH))
        x, w = _segment_nodes(lo, hi, order, n_panels)
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes/weights integrating f against the standard normal density.

    The stored rule is Gauss-Hermite (probabilists' weighting).  The expect
    methods take optional kink locations and transparently switch to the
    kink-split composite scheme of matching order when any are given.
    """

    order: int
    nodes: tuple[float, ...]
    weights: tuple[float, ...]

    @classmethod
    def gauss_hermite(cls, order: int) -> "QuadratureRule":
        if order < 1:
            raise ValueError(f"quadrature order must be >= 1, got {order}")
        # hermegauss weights sum to sqrt(2*pi)
        nodes, weights = np.polynomial.hermite_e.hermegauss(order)
        weights = weights / math.sqrt(2.0 * math.pi)
        return cls(order, tuple(nodes), tuple(weights))

    def expect(self, f, kinks=()) -> float:
        """E[f(z)] for z ~ N(0, 1); split the domain at any kinks of f."""
        if kinks:
            x, w = _piecewise_1d(tuple(kinks), self.order)
        else:
            x, w = np.asarray(self.nodes), np.asarray(self.weights)
        return float(np.dot(w, f(x)))

    def expect2(self, f, c, kinks1=(), kinks2=()):
        """E[f(z1, z2')] with corr(z1, z2') = c, broadcasting over c.

        kinks1/kinks2 are the non-smooth points of f in its first/second
        argument.  c may be a scalar or 1-D array.
        """
        c_arr = np.atleast_1d(np.asarray(c, dtype=float))
        if np.any(np.abs(c_arr) > 1.0 + 1e-12):
            raise DomainError(f"|c| must be <= 1, got {c}")
        c_arr = np.clip(c_arr, -1.0, 1.0)
        if kinks1 or kinks2:
            out = np.empty(c_arr.shape)
            degenerate = 1.0 - c_arr * c_arr < 1e-13
            for i in np.flatnonzero(degenerate):
                out[i] = self._expect2_split(f, float(c_arr[i]), kinks1, kinks2)
            idx = np.flatnonzero(~degenerate)
            # chunked so the (c, outer-node, inner-node) arrays stay small
            for start in range(0, idx.size, 8):
                chunk = idx[start:start + 8]
                out[chunk] = self._expect2_split_chunk(
                    f, c_arr[chunk], kinks1, kinks2
                )
        else:
            z = np.asarray(self.nodes)
            w = np.asarray(self.weights)
            z1 = z[None, :, None]
            z2 = z[None, None, :]
            cc = c_arr[:, None, None]
            z2p = cc * z1 + np.sqrt(1.0 - cc * cc) * z2
            vals = f(np.broadcast_to(z1, z2p.shape), z2p)
            out = np.einsum("i,j,kij->k", w, w, vals)
        return out if np.ndim(c) else float(out[0])

    def _expect2_split(self, f, cval: float, kinks1, kinks2) -> float:
        order = self.order
        st2 = 1.0 - cval * cval
        if st2 < 1e-13:
            # degenerate: z2' = sign(c) z1, a 1-D expectation
            sign = 1.0 if cval >= 0 else -1.0
            all_kinks = tuple(sorted(set(kinks1) | {sign * k for k in kinks2}))
            x, w = _piecewise_1d(all_kinks, order)
            return float(np.dot(w, f(x, sign * x)))
        st = math.sqrt(st2)
        x1, w1 = _piecewise_1d(tuple(kinks1), order)
        # inner kink locations per outer node, monotone in the kink value
        bounds = [np.full_like(x1, -_TRUNC)]
        for k in sorted(kinks2):
            bounds.append(np.clip((k - cval * x1) / st, -_TRUNC, _TRUNC))
        bounds.append(np.full_like(x1, _TRUNC))
        xs, ws = [], []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            x, w = _segment_nodes(lo, np.maximum(lo, hi), order, 2)
            xs.append(x)
            ws.append(w)
        x2 = np.concatenate(xs, axis=-1)
        w2 = np.concatenate(ws, axis=-1)
        vals = f(x1[:, None], cval * x1[:, None] + st * x2)
        return float(w1 @ np.sum(w2 * vals, axis=-1))

    def _expect2_split_chunk(self, f, cvals, kinks1, kinks2) -> np.ndarray:
        """Vectorized _expect2_split over several non-degenerate c values."""
        order = self.order
        x1, w1 = _piecewise_1d(tuple(kinks1), order)
        cs = cvals[:, None]
        st = np.sqrt(1.0 - cs * cs)
        shape = (cvals.size, x1.size)
        bounds = [np.full(shape, -_TRUNC)]
        for k in sorted(kinks2):
            bounds.append(np.clip((k - cs * x1) / st, -_TRUNC, _TRUNC))
        bounds.append(np.full(shape, _TRUNC))
        xs, ws = [], []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            x, w = _segment_nodes(lo, np.maximum(lo, hi), order, 2)
            xs.append(x)
            ws.append(w)
        x2 = np.concatenate(xs, axis=-1)
        w2 = np.concatenate(ws, axis=-1)
        z1 = x1[None, :, None]
        vals = f(z1, cs[:, :, None] * z1 + st[:, :, None] * x2)
        return np.einsum("j,ijk,ijk->i", w1, w2, vals)


def default_rule(order: int | None = None) -> QuadratureRule:
    """Default 60-point rule; QCMAP_QUAD_ORDER overrides."""
    if order is None:
        order = int(os.environ.get("QCMAP_QUAD_ORDER", DEFAULT_QUAD_ORDER))
    return QuadratureRule.gauss_hermite(order)


@dataclass(frozen=True)
class LocalMapParams:
    """Activation plus weight/bias standard deviation multipliers."""

    activation: Activation
    sigma_w: float = 1.0
    sigma_b: float = 0.0

    def __post_init__(self):
        if self.sigma_w < 0 or self.sigma_b < 0:
            raise ValueError("sigma_w and sigma_b must be non-negative")


@dataclass(frozen=True)
class CStats:
    """Local-map scalars the transformation solvers target."""

    c0: float    # C(0)
    cp1: float   # C'(1)
    cpp1: float  # C''(1), +inf for piecewise-linear activations
    q1: float    # Q(1)
    qp1: float   # Q'(1)

    def __post_init__(self):
        if not self.q1 > 0:
            raise ValueError(f"Q(1) must be positive, got {self.q1}")
        if self.cp1 < 0 or self.cpp1 < 0:
            raise ValueError("C'(1) and C''(1) must be non-negative")
        if not -1.0 - 1e-9 <= self.c0 <= 1.0 + 1e-9:
            raise ValueError(f"C(0) must lie in [-1, 1], got {self.c0}")


def _clamp_unit(c, context: str):
    c = np.asarray(c, dtype=float)
    if np.any(np.abs(c) > 1.0 + 1e-12):
        raise DomainError(f"{context}: |c| must be <= 1, got {c}")
    return np.clip(c, -1.0, 1.0)


def _scaled_kinks(phi: Activation, scale: float):
    # Always include 0 so every local-map integrand goes through the
    # composite panelled rule: a single unpanelled rule loses accuracy as the
    # integrand's curvature concentrates near the origin and misses the
    # doubled-order stability target even for smooth activations like tanh.
    return tuple(sorted({0.0, *(k / scale for k in phi.kinks())}))


def lrelu_c_map(alpha: float, c):
    """Closed-form local C map of the rescaled leaky ReLU.

    C(c) = c + (1-a)^2 / (pi (1+a^2)) * (sqrt(1-c^2) - c * arccos(c)).
    Exact at the fixed point c = 1.  Accepts arrays.
    """
    c = _clamp_unit(c, "lrelu_c_map")
    coef = (1.0 - alpha) ** 2 / (math.pi * (1.0 + alpha * alpha))
    out = c + coef * (np.sqrt(1.0 - c * c) - c * np.arccos(c))
    return out if out.ndim else float(out)


def lrelu_c_map_derivative(alpha: float, c):
    """dC/dc for the rescaled leaky ReLU: 1 - (1-a)^2 arccos(c) / ((1+a^2) pi)."""
    c = _clamp_unit(c, "lrelu_c_map_derivative")
    coef = (1.0 - alpha) ** 2 / (math.pi * (1.0 + alpha * alpha))
    out = 1.0 - coef * np.arccos(c)
    return out if out.ndim else float(out)


def local_q(params: LocalMapParams, rule: QuadratureRule, q: float) -> float:
    """Q(q) = sigma_w^2 E[phi(sqrt(q) z)^2] + sigma_b^2."""
    if not q > 0:
        raise DomainError(f"q must be positive, got {q}")
    phi = params.activation
    s = math.sqrt(q)
    e = rule.expect(lambda z: phi.value(s * z) ** 2, kinks=_scaled_kinks(phi, s))
    return params.sigma_w**2 * e + params.sigma_b**2


def local_c(params: LocalMapParams, rule: QuadratureRule, c, q1: float, q2: float):
    """Local C map at correlation c and input q values q1, q2.

    (sigma_w^2 E[phi(sqrt(q1) z1) phi(sqrt(q2) z2')] + sigma_b^2)
    normalized by sqrt(Q(q1) Q(q2)).  Broadcasts over c.
    """
    c = _clamp_unit(c, "local_c")
    if not (q1 > 0 and q2 > 0):
        raise DomainError(f"q values must be positive, got {q1}, {q2}")
    phi = params.activation
    s1, s2 = math.sqrt(q1), math.sqrt(q2)
    num = rule.expect2(
        lambda z1, z2: phi.value(s1 * z1) * phi.value(s2 * z2),
        c,
        kinks1=_scaled_kinks(phi, s1),
        kinks2=_scaled_kinks(phi, s2),
    )
    num = params.sigma_w**2 * num + params.sigma_b**2
    denom = math.sqrt(local_q(params, rule, q1) * local_q(params, rule, q2))
    out = num / denom
    return out if np.ndim(out) else float(out)


def local_c_derivative(
    params: LocalMapParams,
    rule: QuadratureRule,
    c,
    q1: float,
    q2: float,
    order: int = 1,
):
    """i-th derivative of the local C map in c, for i in {1, 2}.

    C^(i)(c, q1, q2) = sigma_w^2 (q1 q2)^(i/2) / sqrt(Q(q1) Q(q2))
                       * E[phi^(i)(sqrt(q1) z1) phi^(i)(sqrt(q2) z2')].
    """
    if order not in (1, 2):
        raise UnsupportedDerivativeError(f"derivative order {order} not supported")
    phi = params.activation
    if order == 2 and not phi.smooth:
        raise UnsupportedDerivativeError(
            "second C-map derivative undefined for piecewise-linear activations"
        )
    c = _clamp_unit(c, "local_c_derivative")
    if not (q1 > 0 and q2 > 0):
        raise DomainError(f"q values must be positive, got {q1}, {q2}")
    s1, s2 = math.sqrt(q1), math.sqrt(q2)
    d = (lambda x: phi.deriv1(x)) if order == 1 else (lambda x: phi.deriv2(x))
    num = rule.expect2(
        lambda z1, z2: d(s1 * z1) * d(s2 * z2),
        c,
        kinks1=_scaled_kinks(phi, s1),
        kinks2=_scaled_kinks(phi, s2),
    )
    denom = math.sqrt(local_q(params, rule, q1) * local_q(params, rule, q2))
    out = params.sigma_w**2 * (q1 * q2) ** (order / 2.0) / denom * num
    return out if np.ndim(out) else float(out)


def global_c(g: NetworkGraph, local, c0):
    """Global C map: compose the local map per the graph structure."""
    return eval_U(g, local, c0)


def cstats(params: LocalMapParams, rule: QuadratureRule) -> CStats:
    """Collect the solver targets Q(1), Q'(1), C'(1), C''(1) and C(0).

    The derivative entries are the plain Gaussian moments E[phi'(z)^2] and
    E[phi''(z)^2]; they equal the true C-map derivatives once the activation
    is normalized to Q(1) = 1, which is the regime every solver works in.
    """
    phi = params.activation
    kinks = phi.kinks()
    sw2, sb2 = params.sigma_w**2, params.sigma_b**2
    q1 = sw2 * rule.expect(lambda z: phi.value(z) ** 2, kinks=kinks) + sb2
    qp1 = sw2 * rule.expect(lambda z: phi.value(z) * phi.deriv1(z) * z, kinks=kinks)
    cp1 = sw2 * rule.expect(lambda z: phi.deriv1(z) ** 2, kinks=kinks)
    if phi.smooth:
        cpp1 = sw2 * rule.expect(lambda z: phi.deriv2(z) ** 2, kinks=kinks)
    else:
        cpp1 = math.inf
    mean = rule.expect(lambda z: phi.value(z), kinks=kinks)
    c0 = (sw2 * mean**2 + sb2) / q1
    return CStats(c0=c0, cp1=cp1, cpp1=cpp1, q1=q1, qp1=qp1)
