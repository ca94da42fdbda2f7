"""Monte-Carlo validation of Q/C map predictions at finite width.

Propagates input pairs through randomly initialized fully-connected
networks (biases zero) and records per-layer empirical q and c values.
Trials use independent counter-derived RNG streams, so aggregate results do
not depend on execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .activations import Activation

__all__ = [
    "InitScheme",
    "SimConfig",
    "EmpiricalTrace",
    "DeviationReport",
    "sample_weight_matrix",
    "make_input_pair",
    "propagate_pair",
    "run_simulation",
    "compare_to_theory",
    "theory_trace",
]


class InitScheme(Enum):
    GAUSSIAN_FAN_IN = "gaussian"
    SUO = "suo"


@dataclass(frozen=True)
class SimConfig:
    width: int
    depth: int
    trials: int
    pairs_per_trial: int
    seed: int
    initial_c: float = 0.0

    def __post_init__(self):
        for name in ("width", "depth", "trials", "pairs_per_trial"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if abs(self.initial_c) > 1.0:
            raise ValueError(f"|initial_c| must be <= 1, got {self.initial_c}")


@dataclass(frozen=True)
class EmpiricalTrace:
    """Per-layer statistics over trials x pairs; index 0 is the input."""

    mean_c: np.ndarray
    std_c: np.ndarray
    mean_q: np.ndarray
    initial_c: float

    @property
    def depth(self) -> int:
        return len(self.mean_c) - 1


@dataclass(frozen=True)
class DeviationReport:
    theory_c: np.ndarray
    max_abs_deviation: float
    mean_abs_deviation: float
    within_one_std_fraction: float


def sample_weight_matrix(scheme: InitScheme, m: int, k: int, rng) -> np.ndarray:
    """Draw an m x k weight matrix.

    Gaussian fan-in: iid N(0, 1/k).  SUO: row-orthonormalized Gaussian
    (transposed procedure when m > k) times max{sqrt(m/k), 1}.
    """
    if m < 1 or k < 1:
        raise ValueError("matrix dimensions must be positive")
    if scheme is InitScheme.GAUSSIAN_FAN_IN:
        return rng.normal(0.0, 1.0 / math.sqrt(k), size=(m, k))
    if scheme is InitScheme.SUO:
        rows, cols = (m, k) if m <= k else (k, m)
        x = rng.normal(size=(cols, rows))
        # QR with sign-corrected R diagonal draws Haar-uniform orthonormal
        # columns, the numerically stable equivalent of (X X^T)^(-1/2) X
        q, r = np.linalg.qr(x)
        q = q * np.sign(np.diag(r))
        w = q.T if m <= k else q
        return w * max(math.sqrt(m / k), 1.0)
    raise ValueError(f"unknown init scheme: {scheme}")


def make_input_pair(dim: int, c0: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Two vectors with squared norm dim and cosine exactly c0."""
    if abs(c0) > 1.0:
        raise ValueError(f"|c0| must be <= 1, got {c0}")
    x1 = rng.normal(size=dim)
    x1 *= math.sqrt(dim) / np.linalg.norm(x1)
    u = rng.normal(size=dim)
    u -= (u @ x1) / (x1 @ x1) * x1
    u *= math.sqrt(dim) / np.linalg.norm(u)
    x2 = c0 * x1 + math.sqrt(1.0 - c0 * c0) * u
    return x1, x2


def _pair_stats(x1: np.ndarray, x2: np.ndarray) -> tuple[float, float, float]:
    d = x1.shape[0]
    n1, n2 = np.linalg.norm(x1), np.linalg.norm(x2)
    c = float(x1 @ x2 / (n1 * n2))
    return float(n1 * n1 / d), float(n2 * n2 / d), c


def propagate_pair(
    act: Activation,
    scheme: InitScheme,
    width: int,
    depth: int,
    x1: np.ndarray,
    x2: np.ndarray,
    rng,
):
    """Per-layer (q1, q2, c), fresh weights each layer, biases zero.

    Entry 0 holds the input statistics; one entry per combined layer after.
    """
    if x1.shape != x2.shape:
        raise ValueError("input vectors must have matching dimension")
    stats = [_pair_stats(x1, x2)]
    for _ in range(depth):
        w = sample_weight_matrix(scheme, width, x1.shape[0], rng)
        x1 = act.value(w @ x1)
        x2 = act.value(w @ x2)
        stats.append(_pair_stats(x1, x2))
    return stats


def _apply_fresh_suo(x: np.ndarray, rng) -> np.ndarray:
    """Action of a fresh square SUO matrix on x, without materializing it.

    For Haar-orthogonal U and x = Q R, the product U x equals V R with V
    drawn uniformly from the Stiefel manifold of the same shape as Q; when x
    has far fewer columns than rows this costs two thin QRs instead of a
    full-size one.  The result matches sampling U explicitly in
    distribution (exactly, not approximately).
    """
    q_x, r_x = np.linalg.qr(x)
    g = rng.normal(size=q_x.shape)
    v, r = np.linalg.qr(g)
    v = v * np.sign(np.diag(r))
    return v @ r_x


def run_simulation(config: SimConfig, act: Activation, scheme: InitScheme) -> EmpiricalTrace:
    """Aggregate pair statistics over trials (networks) x pairs.

    Each trial draws one set of network weights shared by all of its pairs.
    The RNG stream is keyed by (seed, trial), so the result is independent
    of trial execution order.
    """
    depth, pairs = config.depth, config.pairs_per_trial
    all_c = np.empty((config.trials, pairs, depth + 1))
    all_q = np.empty((config.trials, pairs, depth + 1))
    for trial in range(config.trials):
        rng = np.random.default_rng([config.seed, trial])
        pairs_x = []
        for _ in range(pairs):
            x1, x2 = make_input_pair(config.width, config.initial_c, rng)
            pairs_x += [x1, x2]
        x = np.stack(pairs_x, axis=1)  # width x (2 * pairs)
        _record_layer(x, all_c, all_q, trial, 0)
        for layer in range(1, depth + 1):
            if scheme is InitScheme.SUO:
                x = act.value(_apply_fresh_suo(x, rng))
            else:
                w = sample_weight_matrix(scheme, config.width, x.shape[0], rng)
                x = act.value(w @ x)
            _record_layer(x, all_c, all_q, trial, layer)
    flat_c = all_c.reshape(-1, depth + 1)
    flat_q = all_q.reshape(-1, depth + 1)
    return EmpiricalTrace(
        mean_c=flat_c.mean(axis=0),
        std_c=flat_c.std(axis=0),
        mean_q=flat_q.mean(axis=0),
        initial_c=config.initial_c,
    )


def _record_layer(x: np.ndarray, all_c, all_q, trial: int, layer: int) -> None:
    d = x.shape[0]
    x1, x2 = x[:, 0::2], x[:, 1::2]
    n1 = np.linalg.norm(x1, axis=0)
    n2 = np.linalg.norm(x2, axis=0)
    all_c[trial, :, layer] = np.einsum("ij,ij->j", x1, x2) / (n1 * n2)
    all_q[trial, :, layer] = 0.5 * (n1 * n1 + n2 * n2) / d


def theory_trace(local_map, c0: float, depth: int) -> np.ndarray:
    """Iterate a local C map from c0; entry l is the layer-l prediction."""
    out = np.empty(depth + 1)
    out[0] = c0
    c = c0
    for layer in range(1, depth + 1):
        c = local_map(c)
        out[layer] = c
    return out


def compare_to_theory(trace: EmpiricalTrace, g, local_map) -> DeviationReport:
    """Deviation of empirical mean c values from the iterated local map.

    g may be a NetworkGraph (its nonlinear-layer count sets the depth) or a
    plain layer count.
    """
    depth = g if isinstance(g, int) else g.nonlinear_count()
    if trace.depth != depth:
        raise ValueError(
            f"trace depth {trace.depth} does not match expected depth {depth}"
        )
    theory = theory_trace(local_map, trace.initial_c, depth)
    dev = np.abs(trace.mean_c - theory)
    within = np.mean(dev <= np.maximum(trace.std_c, 1e-15))
    return DeviationReport(
        theory_c=theory,
        max_abs_deviation=float(np.max(dev)),
        mean_abs_deviation=float(np.mean(dev)),
        within_one_std_fraction=float(within),
    )
