"""Distributions over unordered pairs and the divergences between them.

Pairs ``(i, j)`` with ``i < j`` are stored in condensed row-major order, the
same layout as ``np.triu_indices(n, 1)``. All logarithms are natural.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CONSTRUCTION_TOL = 1e-9
BOUNDARY_TOL = 1e-6


class InvalidDistributionError(ValueError):
    """A probability vector has negative entries or does not sum to one."""


def n_pairs(n: int) -> int:
    return n * (n - 1) // 2


def _check_probability_vector(p: np.ndarray, tol: float = BOUNDARY_TOL) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise InvalidDistributionError(f"expected a 1-D vector, got shape {p.shape}")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise InvalidDistributionError("entries must be finite and nonnegative")
    total = float(np.sum(p))
    if abs(total - 1.0) > tol:
        raise InvalidDistributionError(f"entries sum to {total!r}, not 1")
    return p


@dataclass(frozen=True)
class PairDistribution:
    """A probability distribution over the ``C(n, 2)`` unordered pairs of ``n`` points."""

    n: int
    mass: np.ndarray

    def __post_init__(self):
        mass = np.ascontiguousarray(self.mass, dtype=np.float64)
        if mass.shape != (n_pairs(self.n),):
            raise InvalidDistributionError(
                f"expected {n_pairs(self.n)} pair masses for n={self.n}, got shape {mass.shape}"
            )
        _check_probability_vector(mass)
        mass.setflags(write=False)
        object.__setattr__(self, "mass", mass)

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "PairDistribution":
        """Read the strict upper triangle of a symmetric ``n x n`` matrix."""
        matrix = np.asarray(matrix, dtype=np.float64)
        n = matrix.shape[0]
        iu = np.triu_indices(n, 1)
        return cls(n, matrix[iu])

    @classmethod
    def uniform(cls, n: int) -> "PairDistribution":
        m = n_pairs(n)
        return cls(n, np.full(m, 1.0 / m))

    def to_matrix(self) -> np.ndarray:
        """Symmetric ``n x n`` matrix with ``p_ij`` off the diagonal and zeros on it."""
        out = np.zeros((self.n, self.n))
        iu = np.triu_indices(self.n, 1)
        out[iu] = self.mass
        out.T[iu] = self.mass
        return out

    def pair_index(self, i: int, j: int) -> int:
        if i == j:
            raise IndexError("pairs must have distinct indices")
        i, j = min(i, j), max(i, j)
        return i * self.n - i * (i + 1) // 2 + (j - i - 1)

    def __len__(self) -> int:
        return self.mass.shape[0]


def _as_vector(p) -> np.ndarray:
    if isinstance(p, PairDistribution):
        return p.mass
    return _check_probability_vector(p)


def _pair_vectors(p, q) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(p, PairDistribution) and isinstance(q, PairDistribution) and p.n != q.n:
        raise ValueError(f"point counts differ: {p.n} vs {q.n}")
    pv, qv = _as_vector(p), _as_vector(q)
    if pv.shape != qv.shape:
        raise ValueError(f"size mismatch: {pv.shape} vs {qv.shape}")
    return pv, qv


def shannon_entropy(dist) -> float:
    """Entropy in nats, with ``0 log 0 = 0``."""
    p = _as_vector(dist)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def perplexity(dist) -> float:
    return float(np.exp(shannon_entropy(dist)))


def kl_divergence(p, q) -> float:
    """``D(p || q)`` in nats.

    Returns ``inf`` when ``q`` vanishes somewhere ``p`` does not; that is a
    legitimate value of the divergence, not an error.
    """
    pv, qv = _pair_vectors(p, q)
    support = pv > 0
    if np.any(qv[support] == 0):
        return float("inf")
    ps, qs = pv[support], qv[support]
    return float(np.sum(ps * (np.log(ps) - np.log(qs))))


def tv_distance(p, q) -> float:
    pv, qv = _pair_vectors(p, q)
    return float(0.5 * np.sum(np.abs(pv - qv)))


def chi_squared(p, q) -> float:
    """``sum (p - q)^2 / q``; requires ``q > 0`` everywhere."""
    pv, qv = _pair_vectors(p, q)
    if np.any(qv <= 0):
        raise ValueError("chi-squared divergence needs a strictly positive reference distribution")
    return float(np.sum((pv - qv) ** 2 / qv))
