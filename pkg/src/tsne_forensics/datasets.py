"""Seeded point-cloud generators and a Jacobi-based PCA baseline.

Every generator draws point ``k`` from its own PCG64 stream, keyed by
``(seed, k)``, so a point's coordinates do not depend on ``n`` or on how many
other points were drawn before it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

MIN_ACCEPTANCE_RATE = 1e-6
_SPLIT_BATCH = 8192
# Give up on rejection sampling only after this many candidates look hopeless.
_SPLIT_PROBE = 10_000_000


@dataclass
class PointCloud:
    points: np.ndarray
    labels: Optional[np.ndarray] = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[0] < 1 or self.points.shape[1] < 1:
            raise ValueError(f"points must be an n x d matrix with n, d >= 1, got {self.points.shape}")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("points must be finite")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.points.shape[0],):
                raise ValueError("labels must have one entry per point")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


def point_stream(seed: int, k: int) -> np.random.Generator:
    """Independent generator for point ``k`` under ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(k,))))


def _unit_gaussian(rng: np.random.Generator, d: int) -> np.ndarray:
    while True:
        z = rng.standard_normal(d)
        norm = np.sqrt(np.dot(z, z))
        if norm > 0:
            return z / norm


def sample_sphere(n: int, d: int, seed: int) -> PointCloud:
    """``n`` uniform points on the unit sphere in ``R^d`` (normalized Gaussians)."""
    if n < 1 or d < 2:
        raise ValueError(f"need n >= 1 and d >= 2, got n={n}, d={d}")
    pts = np.empty((n, d))
    for k in range(n):
        pts[k] = _unit_gaussian(point_stream(seed, k), d)
    return PointCloud(pts, None, {"generator": "sphere", "n": n, "d": d, "seed": seed})


def split_sphere_threshold(d: int, threshold_exponent: float = 0.1) -> float:
    return float(d) ** (-threshold_exponent)


def sample_split_sphere(n: int, d: int, seed: int, threshold_exponent: float = 0.1) -> PointCloud:
    """Sphere points conditioned on ``|x[0]| >= d**-threshold_exponent``.

    Labels are 1 for a positive first coordinate and 0 otherwise.
    """
    if n < 1 or d < 2:
        raise ValueError(f"need n >= 1 and d >= 2, got n={n}, d={d}")
    threshold = split_sphere_threshold(d, threshold_exponent)
    pts = np.empty((n, d))
    drawn = 0
    for k in range(n):
        rng = point_stream(seed, k)
        while True:
            z = rng.standard_normal((_SPLIT_BATCH, d))
            norms = np.sqrt(np.einsum("ij,ij->i", z, z))
            with np.errstate(divide="ignore", invalid="ignore"):
                first_coord = z[:, 0] / norms
            ok = (norms > 0) & (np.abs(first_coord) >= threshold)
            hits = np.flatnonzero(ok)
            if hits.size:
                first = hits[0]
                drawn += first + 1
                pts[k] = z[first] / norms[first]
                break
            drawn += _SPLIT_BATCH
            if drawn >= _SPLIT_PROBE and (k + 1) / drawn < MIN_ACCEPTANCE_RATE:
                raise RuntimeError(
                    f"split-sphere acceptance rate {(k + 1) / drawn:.3g} is below "
                    f"{MIN_ACCEPTANCE_RATE:g} (d={d}, threshold={threshold:.6g}); aborting"
                )
    labels = (pts[:, 0] > 0).astype(np.int64)
    meta = {
        "generator": "split-sphere",
        "n": n,
        "d": d,
        "seed": seed,
        "threshold_exponent": threshold_exponent,
        "threshold": threshold,
        "candidates_drawn": int(drawn),
    }
    return PointCloud(pts, labels, meta)


def simplex_clusters(k: int, per_cluster: int, sigma: float, seed: int) -> PointCloud:
    """Gaussian clusters of standard deviation ``sigma`` around the basis vectors of ``R^k``."""
    if k < 1 or per_cluster < 1:
        raise ValueError("need k >= 1 and per_cluster >= 1")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    n = k * per_cluster
    pts = np.zeros((n, k))
    labels = np.repeat(np.arange(k), per_cluster)
    for idx in range(n):
        pts[idx] = sigma * point_stream(seed, idx).standard_normal(k)
        pts[idx, labels[idx]] += 1.0
    meta = {"generator": "simplex-clusters", "k": k, "per_cluster": per_cluster, "sigma": sigma, "seed": seed}
    return PointCloud(pts, labels, meta)


def doubled_frame(n_half: int) -> PointCloud:
    """``e_1..e_m`` followed by ``2e_{m+1}..2e_{2m}`` in ``R^{2m}``; label 0 = block A, 1 = block B."""
    if n_half < 1:
        raise ValueError("n_half must be >= 1")
    m = 2 * n_half
    pts = np.zeros((m, m))
    diag = np.concatenate([np.ones(n_half), np.full(n_half, 2.0)])
    pts[np.arange(m), np.arange(m)] = diag
    labels = np.repeat([0, 1], n_half)
    return PointCloud(pts, labels, {"generator": "doubled-frame", "n_half": n_half})


def equidistant_simplex(n: int) -> PointCloud:
    """The orthonormal frame ``e_1..e_n``; all pairwise distances are ``sqrt(2)``."""
    if n < 2:
        raise ValueError("n must be >= 2")
    return PointCloud(np.eye(n), None, {"generator": "equidistant-simplex", "n": n})


# --- PCA -----------------------------------------------------------------


def jacobi_eigh(a: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` in the original diagonal order (no
    sorting); column ``k`` of the second array is the eigenvector for
    ``eigenvalues[k]``. Iterates until the off-diagonal Frobenius norm is at
    most ``tol`` times the full norm.
    """
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    if not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, np.abs(a).max(initial=0.0))):
        raise ValueError("matrix must be symmetric")
    a = 0.5 * (a + a.T)
    m = a.shape[0]
    v = np.eye(m)
    scale = np.sqrt(np.sum(a * a))
    if scale == 0:
        return np.zeros(m), v
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2))
        if off <= tol * scale:
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise RuntimeError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
    return np.diag(a).copy(), v


@dataclass
class PCAResult:
    projection: np.ndarray
    components: np.ndarray  # d x k, columns sorted by descending eigenvalue
    eigenvalues: np.ndarray  # all d eigenvalues, descending
    mean: np.ndarray

    @property
    def explained_fraction(self) -> float:
        k = self.components.shape[1]
        total = float(np.sum(self.eigenvalues))
        return float(np.sum(self.eigenvalues[:k]) / total) if total > 0 else 0.0


def covariance(points: np.ndarray) -> np.ndarray:
    """Sample covariance with the ``1/n`` normalization."""
    x = np.asarray(points, dtype=np.float64)
    centered = x - x.mean(axis=0)
    return centered.T @ centered / x.shape[0]


def pca(points, k: int) -> PCAResult:
    x = points.points if isinstance(points, PointCloud) else np.asarray(points, dtype=np.float64)
    d = x.shape[1]
    if not 1 <= k <= d:
        raise ValueError(f"k must lie in [1, {d}], got {k}")
    mean = x.mean(axis=0)
    evals, evecs = jacobi_eigh(covariance(x))
    # stable sort keeps coordinate order among tied eigenvalues
    order = np.argsort(-evals, kind="stable")
    evals, evecs = evals[order], evecs[:, order]
    for col in range(d):
        pivot = np.argmax(np.abs(evecs[:, col]))
        if evecs[pivot, col] < 0:
            evecs[:, col] = -evecs[:, col]
    comps = evecs[:, :k]
    return PCAResult((x - mean) @ comps, comps, evals, mean)


def pca_project(points, k: int) -> np.ndarray:
    return pca(points, k).projection
