"""High-dimensional Gaussian affinities and perplexity calibration.

Conditional rows are held as an ``n x n`` row-stochastic matrix with a zero
diagonal: row ``i`` is ``p_{j|i}`` over ``j != i``. A bandwidth of ``inf``
marks a row that is exactly uniform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .datasets import PointCloud
from .divergences import PairDistribution, n_pairs

SIGMA_MIN = 1e-20
SIGMA_MAX = 1e20


@dataclass(frozen=True)
class AffinityConfig:
    """Either a fixed bandwidth ``sigma`` or a target ``perplexity``, never both."""

    sigma: Optional[float] = None
    perplexity: Optional[float] = None
    entropy_tolerance: float = 1e-5
    max_search_iterations: int = 100

    def __post_init__(self):
        if (self.sigma is None) == (self.perplexity is None):
            raise ValueError("set exactly one of sigma or perplexity")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.perplexity is not None and not self.perplexity > 0:
            raise ValueError(f"perplexity must be positive, got {self.perplexity}")
        if not self.entropy_tolerance > 0 or self.max_search_iterations < 1:
            raise ValueError("entropy_tolerance and max_search_iterations must be positive")

    @property
    def mode(self) -> str:
        return "fixed_sigma" if self.sigma is not None else "perplexity"


@dataclass
class BandwidthResult:
    sigmas: np.ndarray
    achieved_perplexities: np.ndarray
    converged: np.ndarray


def _coords(points) -> np.ndarray:
    x = points.points if isinstance(points, PointCloud) else np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("points must be an n x d matrix")
    if x.shape[0] < 2:
        raise ValueError("need at least two points")
    return x


def squared_distances(points) -> np.ndarray:
    """Exact-zero-diagonal squared Euclidean distance matrix."""
    x = _coords(points)
    sq = np.einsum("ij,ij->i", x, x)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return d2


def _row_kernel(d2: np.ndarray, sigmas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Normalized rows and their entropies for finite bandwidths.

    ``d2`` and ``sigmas`` are indexed by the rows being evaluated; the diagonal
    entries of those rows must be flagged with ``inf`` distance.
    """
    logits = -d2 / (2.0 * sigmas[:, None] ** 2)
    shift = np.max(logits, axis=1, keepdims=True)
    logits = logits - shift
    w = np.exp(logits)
    total = np.sum(w, axis=1, keepdims=True)
    p = w / total
    finite = np.isfinite(logits)
    ent = np.log(total[:, 0]) - np.sum(np.where(finite, p * np.where(finite, logits, 0.0), 0.0), axis=1)
    return p, ent


def _masked(d2: np.ndarray) -> np.ndarray:
    out = d2.copy()
    np.fill_diagonal(out, np.inf)
    return out


def conditional_rows(points, sigmas) -> np.ndarray:
    """``p_{j|i}`` for every anchor ``i``; ``inf`` bandwidths give uniform rows."""
    d2 = squared_distances(points)
    n = d2.shape[0]
    sigmas = np.broadcast_to(np.asarray(sigmas, dtype=np.float64), (n,)).copy()
    if np.any(~(sigmas > 0)):
        raise ValueError("bandwidths must be positive (or inf)")
    rows = np.full((n, n), 1.0 / (n - 1))
    finite = np.isfinite(sigmas)
    if np.any(finite):
        rows[finite], _ = _row_kernel(_masked(d2)[finite], sigmas[finite])
    np.fill_diagonal(rows, 0.0)
    return rows


def row_entropies(rows: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(rows > 0, rows * np.log(rows), 0.0)
    return -np.sum(terms, axis=1)


def bandwidth_search(points, config: AffinityConfig) -> BandwidthResult:
    """Per-row search for ``sigma_i`` with ``H(P_i) = log(perplexity)``.

    Each row starts at ``sigma = 1``, doubles or halves until the target
    entropy is bracketed, then bisects geometrically. Rows whose target cannot
    be met return their last iterate with ``converged = False`` and the
    perplexity actually achieved. A target of at least ``n - 1`` is only
    reachable in the limit, so those rows get ``sigma = inf`` and a uniform row.
    """
    if config.perplexity is None:
        raise ValueError("bandwidth_search needs a perplexity target")
    d2 = _masked(squared_distances(points))
    n = d2.shape[0]
    if config.perplexity >= n - 1:
        return BandwidthResult(np.full(n, np.inf), np.full(n, float(n - 1)), np.ones(n, dtype=bool))

    target = math.log(config.perplexity)
    tol = config.entropy_tolerance
    sigma = np.ones(n)
    lo = np.full(n, np.nan)
    hi = np.full(n, np.nan)
    best_sigma = sigma.copy()
    best_ent = np.full(n, np.nan)
    active = np.ones(n, dtype=bool)

    for _ in range(config.max_search_iterations):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        _, ent = _row_kernel(d2[idx], sigma[idx])
        err = ent - target
        better = ~(np.abs(err) >= np.abs(best_ent[idx] - target))
        best_sigma[idx[better]] = sigma[idx[better]]
        best_ent[idx[better]] = ent[better]
        done = np.abs(err) <= tol
        active[idx[done]] = False

        s = sigma[idx]
        too_low = err < 0  # entropy grows with sigma
        lo_i, hi_i = lo[idx], hi[idx]
        lo_i = np.where(too_low, s, lo_i)
        hi_i = np.where(too_low, hi_i, s)
        lo[idx], hi[idx] = lo_i, hi_i
        nxt = np.where(
            np.isnan(hi_i),
            s * 2.0,
            np.where(np.isnan(lo_i), s / 2.0, np.sqrt(lo_i * hi_i)),
        )
        # out of bracket range: the target is unreachable for this row
        stuck = (nxt > SIGMA_MAX) | (nxt < SIGMA_MIN)
        active[idx[stuck & ~done]] = False
        sigma[idx] = np.clip(nxt, SIGMA_MIN, SIGMA_MAX)

    ent_final = best_ent
    converged = np.abs(ent_final - target) <= tol
    return BandwidthResult(best_sigma, np.exp(ent_final), converged)


def symmetrize(rows: np.ndarray) -> PairDistribution:
    """``p_ij = (p_{i|j} + p_{j|i}) / n`` over unordered pairs."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] != rows.shape[1]:
        raise ValueError("expected one conditional row per point (an n x n matrix)")
    n = rows.shape[0]
    iu = np.triu_indices(n, 1)
    mass = (rows[iu] + rows.T[iu]) / n
    return PairDistribution(n, mass)


def affinities(points, config: AffinityConfig) -> tuple[PairDistribution, np.ndarray, np.ndarray]:
    """Build ``P`` from a point cloud. Returns ``(P, sigmas, achieved_perplexities)``."""
    x = _coords(points)
    n = x.shape[0]
    if config.sigma is not None:
        sigmas = np.full(n, float(config.sigma))
        rows = conditional_rows(x, sigmas)
        achieved = np.exp(row_entropies(rows))
    else:
        result = bandwidth_search(x, config)
        sigmas, achieved = result.sigmas, result.achieved_perplexities
        rows = conditional_rows(x, sigmas)
    return symmetrize(rows), sigmas, achieved


def uniformity_statistic(p: PairDistribution) -> float:
    """``max |C(n,2) p_ij - 1|``; exactly zero when every pair carries equal mass."""
    mass = p.mass
    if mass.size == 0 or np.all(mass == mass[0]):
        return 0.0
    return float(np.max(np.abs(n_pairs(p.n) * mass - 1.0)))
