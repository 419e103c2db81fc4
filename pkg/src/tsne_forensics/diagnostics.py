"""Statistics on inputs, affinities and embeddings that mirror the limitation results.

Each statistic is tagged with the result it speaks to (see ``Theorem``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
import math
from typing import Any, Sequence

import numpy as np

from .divergences import PairDistribution, kl_divergence, tv_distance

SCHEMA_VERSION = 1


class Theorem(str, Enum):
    PROP_VOLUME = "prop_volume"
    PROP_DOUBLED_FRAME = "prop_doubled_frame"
    PROP_SINGLE_POINT = "prop_single_point"
    THM_SPHERE = "thm_sphere"
    LEMMA_SMALL_KL = "lemma_small_kl"
    LEMMA_CONCENTRATION = "lemma_concentration"


@dataclass
class Statistic:
    name: str
    value: Any
    theorem: Theorem
    params: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "value": _jsonable(self.value), "theorem": self.theorem.value,
                "params": {k: _jsonable(v) for k, v in self.params.items()}}


@dataclass
class DiagnosticsReport:
    statistics: list[Statistic] = field(default_factory=list)

    def add(self, name: str, value, theorem: Theorem, **params) -> None:
        self.statistics.append(Statistic(name, value, Theorem(theorem), params))

    def get(self, name: str):
        for stat in self.statistics:
            if stat.name == name:
                return stat.value
        raise KeyError(name)

    def to_dict(self) -> dict[str, Any]:
        return {"schema_version": SCHEMA_VERSION, "statistics": [s.to_dict() for s in self.statistics]}

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "DiagnosticsReport":
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {doc.get('schema_version')!r}")
        return cls([Statistic(s["name"], s["value"], Theorem(s["theorem"]), dict(s.get("params", {})))
                    for s in doc["statistics"]])


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else str(f)
    return v


def pairwise_distances(Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=np.float64)
    diff = Y[:, None, :] - Y[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


# --- balls ---------------------------------------------------------------


@dataclass
class CoveringBall:
    center_index: int
    center: np.ndarray
    radius: float
    count: int


def covering_ball(Y, fraction: float) -> CoveringBall:
    """Smallest closed ball centered at a point of ``Y`` holding ``ceil(fraction * n)`` points.

    The center counts toward the total. Ties go to the lowest index.
    """
    Y = np.asarray(Y, dtype=np.float64)
    n = Y.shape[0]
    if n < 1:
        raise ValueError("need at least one point")
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    need = max(1, math.ceil(fraction * n - 1e-12))
    dist = np.sort(pairwise_distances(Y), axis=1)
    radii = dist[:, need - 1]
    best = int(np.argmin(radii))
    return CoveringBall(best, Y[best].copy(), float(radii[best]), need)


@dataclass
class Ball:
    center: np.ndarray
    radius: float


def _ball_through(support: list[np.ndarray]) -> Ball:
    """Smallest ball with every support point on its boundary."""
    a = support[0]
    if len(support) == 1:
        return Ball(a.copy(), 0.0)
    vecs = np.array([p - a for p in support[1:]])
    gram = 2.0 * vecs @ vecs.T
    rhs = np.einsum("ij,ij->i", vecs, vecs)
    try:
        lam = np.linalg.solve(gram, rhs)
        if not np.all(np.isfinite(lam)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        return _small_ball_brute(np.array(support))
    offset = lam @ vecs
    return Ball(a + offset, float(np.sqrt(offset @ offset)))


def _contains(ball: Ball, p: np.ndarray) -> bool:
    d = p - ball.center
    return float(d @ d) <= ball.radius * ball.radius * (1.0 + 1e-12)


def _small_ball_brute(pts: np.ndarray) -> Ball:
    """Minimum ball of a handful of (possibly degenerate) points by trying all supports."""
    best = None
    m = len(pts)
    for size in range(1, min(m, pts.shape[1] + 1) + 1):
        for idx in combinations(range(m), size):
            sub = [pts[i] for i in idx]
            if size > 1 and np.linalg.matrix_rank(np.array([p - sub[0] for p in sub[1:]])) < size - 1:
                continue
            ball = _ball_through(sub) if size > 1 else Ball(sub[0].copy(), 0.0)
            if all(_contains(ball, p) for p in pts) and (best is None or ball.radius < best.radius):
                best = ball
    if best is None:
        # only reachable through round-off on near-degenerate supports
        c = pts.mean(axis=0)
        best = Ball(c, float(np.sqrt(np.max(np.sum((pts - c) ** 2, axis=1)))))
    return best


def _with_support(pts: np.ndarray, upto: int, support: list[np.ndarray], dim: int) -> Ball:
    ball = _ball_through(support)
    if len(support) == dim + 1:
        return ball
    for i in range(upto):
        if not _contains(ball, pts[i]):
            ball = _with_support(pts, i, support + [pts[i]], dim)
    return ball


def _centered(Y) -> tuple[np.ndarray, np.ndarray]:
    """``Y`` shifted by its centroid, so that tiny clouds far from the origin keep full precision."""
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[0] < 1:
        raise ValueError("need an n x s array with n >= 1")
    shift = Y.mean(axis=0)
    return Y - shift, shift


def enclosing_ball(Y, seed: int = 0) -> Ball:
    """Exact minimum enclosing ball (Welzl's randomized incremental algorithm)."""
    X, shift = _centered(Y)
    dim = X.shape[1]
    pts = X[np.random.Generator(np.random.PCG64(seed)).permutation(X.shape[0])]
    ball = Ball(pts[0].copy(), 0.0)
    for i in range(1, pts.shape[0]):
        if not _contains(ball, pts[i]):
            ball = _with_support(pts, i, [pts[i]], dim)
    return Ball(ball.center + shift, ball.radius)


def enclosing_ball_brute(Y) -> Ball:
    """Reference answer: the smallest covering ball among those circumscribing
    every pair, triple (and in 3-D quadruple) of points. Vectorized per support size."""
    X, shift = _centered(Y)
    n, dim = X.shape
    if n == 1:
        return Ball(Y[0].astype(np.float64).copy(), 0.0)
    best_c, best_r2 = None, np.inf
    for size in range(2, min(n, dim + 1) + 1):
        idx = np.array(list(combinations(range(n), size)))
        base = X[idx[:, 0]]
        vecs = X[idx[:, 1:]] - base[:, None, :]
        gram = 2.0 * vecs @ vecs.transpose(0, 2, 1)
        rhs = np.einsum("mkd,mkd->mk", vecs, vecs)
        scale = np.max(rhs, axis=1) ** (size - 1)
        ok = np.abs(np.linalg.det(gram)) > 1e-12 * np.maximum(scale, 1e-300)
        if not np.any(ok):
            continue
        lam = np.linalg.solve(gram[ok], rhs[ok][:, :, None])[:, :, 0]
        offset = np.einsum("mk,mkd->md", lam, vecs[ok])
        centers = base[ok] + offset
        r2 = np.einsum("md,md->m", offset, offset)
        for lo in range(0, len(r2), 4096):
            c, rr = centers[lo:lo + 4096], r2[lo:lo + 4096]
            d2 = np.sum((X[None, :, :] - c[:, None, :]) ** 2, axis=2)
            cover = np.all(d2 <= rr[:, None] * (1 + 1e-12), axis=1)
            if np.any(cover):
                k = np.flatnonzero(cover)[np.argmin(rr[cover])]
                if rr[k] < best_r2:
                    best_c, best_r2 = c[k], rr[k]
    if best_c is None:
        return Ball(Y[0].astype(np.float64).copy(), 0.0)  # all points coincide
    return Ball(best_c + shift, float(np.sqrt(best_r2)))


def theorem_ball_check(Y, r: float, seed: int = 0) -> dict[str, Any]:
    """Does a radius-``r`` open ball around some point hold ``1 - r`` of ``Y``?"""
    if not r > 0:
        raise ValueError("r must be positive")
    Y = np.asarray(Y, dtype=np.float64)
    n = Y.shape[0]
    counts = np.sum(pairwise_distances(Y) < r, axis=1)
    fraction = float(np.max(counts) / n)
    ball = enclosing_ball(Y, seed=seed)
    return {
        "fraction_in_r_ball": fraction,
        "center_index": int(np.argmax(counts)),
        "enclosing_radius": ball.radius,
        "radius_over_sqrt_r": ball.radius / math.sqrt(r),
        "passes": fraction >= 1.0 - r,
    }


# --- pigeonhole grid -----------------------------------------------------


def grid_collision_stats(X, Y, g: float, far_threshold: float = 0.2, seed: int = 0) -> dict[str, Any]:
    """Grid-cell collision counts for an embedding ``Y`` of inputs ``X``.

    ``Y`` is centered at its enclosing-ball center and ``[-B, B]^s`` is cut into
    ``ceil(sqrt(n)/g)`` cells per axis. A point is "far but close" when some
    other point lies at least ``far_threshold`` away in ``X`` yet within
    ``3 B g / sqrt(n)`` in ``Y``.
    """
    X = np.asarray(getattr(X, "points", X), dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    n = Y.shape[0]
    if X.shape[0] != n:
        raise ValueError(f"X has {X.shape[0]} rows but Y has {n}")
    if not g > 0:
        raise ValueError("g must be positive")
    ball = enclosing_ball(Y, seed=seed)
    centered = Y - ball.center
    B = float(np.max(np.sqrt(np.sum(centered ** 2, axis=1))))
    per_axis = max(1, math.ceil(math.sqrt(n) / g))
    n_cells = per_axis ** Y.shape[1]
    if B > 0:
        side = 2.0 * B / per_axis
        cell = np.floor((centered + B) / side).astype(np.int64)
        np.clip(cell, 0, per_axis - 1, out=cell)
    else:
        side = 0.0
        cell = np.zeros_like(centered, dtype=np.int64)
    flat = np.ravel_multi_index(tuple(cell.T), (per_axis,) * Y.shape[1])
    _, inverse, counts = np.unique(flat, return_inverse=True, return_counts=True)
    fraction_alone = float(np.sum(counts[inverse] == 1) / n)
    if fraction_alone > n_cells / n:
        raise AssertionError(f"pigeonhole violated: {fraction_alone} > {n_cells}/{n}")

    close = 3.0 * B * g / math.sqrt(n)
    if n > 1:
        dx = _input_distances(X)
        dy = pairwise_distances(Y)
        hit = (dx >= far_threshold) & (dy <= close)
        np.fill_diagonal(hit, False)
        fraction_far = float(np.mean(np.any(hit, axis=1)))
    else:
        fraction_far = 0.0
    return {
        "B": B,
        "cells_per_axis": per_axis,
        "n_cells": n_cells,
        "cell_side": side,
        "close_radius": close,
        "fraction_alone": fraction_alone,
        "pigeonhole_bound": n_cells / n,
        "fraction_far_but_close": fraction_far,
    }


def _input_distances(X: np.ndarray) -> np.ndarray:
    sq = np.einsum("ij,ij->i", X, X)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return np.sqrt(d2)


# --- doubled-frame blocks ------------------------------------------------


@dataclass(frozen=True)
class BlockPartition:
    A: tuple[int, ...]
    B: tuple[int, ...]

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> "BlockPartition":
        labels = np.asarray(labels)
        return cls(tuple(np.flatnonzero(labels == 0).tolist()), tuple(np.flatnonzero(labels != 0).tolist()))

    def validate(self, n: int) -> None:
        a, b = set(self.A), set(self.B)
        if a & b or a | b != set(range(n)) or len(a) + len(b) != n:
            raise ValueError(f"A and B must partition range({n})")


BLOCKS = ("AA", "AB", "BB")


def doubled_frame_constants(sigma: float) -> tuple[float, float]:
    """Limiting within-block masses ``(p0*, p1*)`` relative to uniform."""
    p0 = 2.0 / (1.0 + math.exp(-3.0 / (2.0 * sigma * sigma)))
    return p0, 2.0 - p0


def _block_masses(dist: PairDistribution, in_a: np.ndarray) -> np.ndarray:
    iu, ju = np.triu_indices(dist.n, 1)
    a_i, a_j = in_a[iu], in_a[ju]
    both_a = a_i & a_j
    both_b = ~a_i & ~a_j
    cross = ~(both_a | both_b)
    return np.array([dist.mass[both_a].sum(), dist.mass[cross].sum(), dist.mass[both_b].sum()])


def block_stats(p: PairDistribution, q: PairDistribution, partition: BlockPartition, sigma: float) -> dict[str, Any]:
    if p.n != q.n:
        raise ValueError("P and Q cover different point counts")
    partition.validate(p.n)
    in_a = np.zeros(p.n, dtype=bool)
    in_a[list(partition.A)] = True
    pb = _block_masses(p, in_a)
    qb = _block_masses(q, in_a)
    p0, p1 = doubled_frame_constants(sigma)
    block_kl = kl_divergence(pb / pb.sum(), qb / qb.sum())
    block_tv = tv_distance(pb / pb.sum(), qb / qb.sum())
    full_kl = kl_divergence(p, q)
    if block_kl > full_kl + 1e-12:
        raise AssertionError(f"block KL {block_kl} exceeds full KL {full_kl}")
    return {
        "P_blocks": dict(zip(BLOCKS, pb.tolist())),
        "Q_blocks": dict(zip(BLOCKS, qb.tolist())),
        "p0_star": p0,
        "p1_star": p1,
        "block_kl": block_kl,
        "block_tv": block_tv,
        "pinsker_lower_bound": 2.0 * block_tv * block_tv,
        "full_kl": full_kl,
        "asymptotic_lower_bound": 2.0 * ((p0 - p1) / 8.0) ** 2,
    }


# --- spherical caps ------------------------------------------------------


def cap_measure_log_bound(r: float, d: int) -> float:
    if not 0 < r < 2:
        raise ValueError("cap radius must lie in (0, 2)")
    if d < 2:
        raise ValueError("d must be >= 2")
    return -0.5 * math.log(2 * math.pi * d) + (d - 1) * (math.log(r) - 0.5 * math.log1p(-r * r / 4))


def cap_measure_bound(r: float, d: int) -> float:
    """Upper bound on the uniform measure of a distance-``r`` cap on the sphere in ``R^d``."""
    return math.exp(cap_measure_log_bound(r, d))


def cap_measure_monte_carlo(r: float, d: int, samples: int, seed: int, chunk: int = 1_000_000) -> float:
    """Fraction of uniform sphere samples within distance ``r`` of a fixed pole."""
    rng = np.random.Generator(np.random.PCG64(seed))
    # |x - e1| <= r  <=>  x1 >= 1 - r^2/2
    cut = 1.0 - r * r / 2.0
    hits = 0
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        z = rng.standard_normal((m, d))
        x1 = z[:, 0] / np.sqrt(np.einsum("ij,ij->i", z, z))
        hits += int(np.sum(x1 >= cut))
        done += m
    return hits / samples
