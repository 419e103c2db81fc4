"""Low-dimensional Cauchy affinities, the KL objective and its descent.

With ``P`` and ``Q`` over unordered pairs and ``Z`` summed over unordered
pairs, the exact gradient is::

    dD/dy_i = 2 * sum_j (p_ij - q_ij) * w_ij * (y_i - y_j),   w_ij = 1 / (1 + |y_i - y_j|^2)

which is the familiar ``4 * sum (p - q) w (y_i - y_j)`` once ``p`` and ``q`` are
spread over ordered pairs. Early exaggeration scales the attractive ``p``
term by ``alpha``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .divergences import PairDistribution, kl_divergence


class DivergedError(RuntimeError):
    def __init__(self, iteration: int):
        super().__init__(f"embedding became non-finite at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class OptimizerConfig:
    s: int = 2
    total_iterations: int = 1000
    exaggeration_iterations: int = 500
    alpha: float = 12.0
    # None: n / (4 alpha), see step_for
    step_size: Optional[float] = None
    momentum_schedule: tuple[tuple[int, float], ...] = ((0, 0.5), (250, 0.8))
    init_scale: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "momentum_schedule", tuple((int(a), float(b)) for a, b in self.momentum_schedule)
        )
        if not 1 <= self.s <= 3:
            raise ValueError("output dimension must be 1, 2 or 3")
        if self.total_iterations < 0 or not 0 <= self.exaggeration_iterations <= self.total_iterations:
            raise ValueError("need 0 <= exaggeration_iterations <= total_iterations")
        if self.alpha < 1:
            raise ValueError("alpha must be >= 1")
        if (self.step_size is not None and not self.step_size > 0) or not self.init_scale > 0:
            raise ValueError("step_size and init_scale must be positive")
        starts = [a for a, _ in self.momentum_schedule]
        if starts != sorted(starts) or any(not 0 <= g < 1 for _, g in self.momentum_schedule):
            raise ValueError("momentum schedule must be sorted by start with gamma in [0, 1)")

    def step_for(self, n: int) -> float:
        """Step size for ``n`` points.

        The automatic choice ``n / (4 alpha)`` keeps the exaggerated update a
        contraction near a collapsed embedding, where the attractive term has
        curvature about ``4 alpha / n`` per point.
        """
        if self.step_size is not None:
            return float(self.step_size)
        return n / (4.0 * self.alpha)

    def momentum(self, iteration: int) -> float:
        gamma = 0.0
        for start, g in self.momentum_schedule:
            if iteration >= start:
                gamma = g
        return gamma

    def exaggeration(self, iteration: int) -> float:
        return self.alpha if iteration < self.exaggeration_iterations else 1.0


@dataclass
class EmbeddingState:
    Y: np.ndarray
    velocity: np.ndarray
    iteration: int = 0

    def copy(self) -> "EmbeddingState":
        return EmbeddingState(self.Y.copy(), self.velocity.copy(), self.iteration)


def _kernel(Y: np.ndarray) -> tuple[np.ndarray, float]:
    """Cauchy kernel matrix with zero diagonal, and ``Z`` over unordered pairs."""
    Y = np.asarray(Y, dtype=np.float64)
    diff = Y[:, None, :] - Y[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    w = 1.0 / (1.0 + d2)
    np.fill_diagonal(w, 0.0)
    z = float(np.sum(w[np.triu_indices(Y.shape[0], 1)]))
    return w, z


def low_dim_affinities(Y) -> tuple[PairDistribution, float]:
    """``(Q, Z)`` for an embedding ``Y``; every ``q_ij`` is strictly positive."""
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[0] < 2:
        raise ValueError("need an n x s embedding with n >= 2")
    w, z = _kernel(Y)
    iu = np.triu_indices(Y.shape[0], 1)
    return PairDistribution(Y.shape[0], w[iu] / z), z


def objective(p: PairDistribution, Y) -> float:
    q, _ = low_dim_affinities(Y)
    if q.n != p.n:
        raise ValueError(f"P is over {p.n} points but Y has {q.n} rows")
    return kl_divergence(p, q)


@njit(cache=True)
def _pair_pass(Y, P, alpha, forces, w):
    """Objective terms and (optionally) exaggerated forces in two sweeps over pairs.

    Returns ``(Z, sum_ij p_ij log(1 + |y_i - y_j|^2))``. When ``forces`` has
    ``n`` rows it is overwritten with ``2 sum_j (alpha p_ij - q_ij) w_ij (y_i - y_j)``,
    each point summing over ``j`` in ascending order. ``w`` is ``n x n`` scratch.
    ``Z = 0`` (every distance overflowed) skips the force sweep; callers treat
    it as divergence.
    """
    n, s = Y.shape
    z = 0.0
    cross = 0.0
    for i in range(n):
        w[i, i] = 0.0
        for j in range(i + 1, n):
            d2 = 0.0
            for k in range(s):
                t = Y[i, k] - Y[j, k]
                d2 += t * t
            wij = 1.0 / (1.0 + d2)
            w[i, j] = wij
            w[j, i] = wij
            z += wij
            if P[i, j] > 0.0:
                cross += P[i, j] * np.log1p(d2)
    if forces.shape[0] == n and z > 0.0:
        inv_z = 1.0 / z
        for i in range(n):
            for k in range(s):
                forces[i, k] = 0.0
            for j in range(n):
                wij = w[i, j]
                c = 2.0 * (alpha * P[i, j] - wij * inv_z) * wij
                for k in range(s):
                    forces[i, k] += c * (Y[i, k] - Y[j, k])
    return z, cross


def _forces(p_mat: np.ndarray, Y: np.ndarray, alpha: float) -> np.ndarray:
    """``2 * sum_j (alpha p_ij - q_ij) w_ij (y_i - y_j)`` for every ``i``."""
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    out = np.empty_like(Y)
    n = Y.shape[0]
    z, _ = _pair_pass(Y, np.ascontiguousarray(p_mat), float(alpha), out, np.empty((n, n)))
    if not z > 0:
        raise FloatingPointError("every pairwise distance overflowed")
    return out


def attractive_repulsive(p: PairDistribution, Y) -> tuple[np.ndarray, np.ndarray]:
    """The two force sums ``sum p q Z (y_i - y_j)`` and ``sum q^2 Z (y_i - y_j)`` separately."""
    Y = np.asarray(Y, dtype=np.float64)
    w, z = _kernel(Y)
    p_mat = p.to_matrix()
    att = p_mat * w
    rep = (w / z) * w
    out = []
    for coef in (att, rep):
        f = np.empty_like(Y)
        rs = np.sum(coef, axis=1)
        for k in range(Y.shape[1]):
            f[:, k] = rs * Y[:, k] - np.sum(coef * Y[:, k][None, :], axis=1)
        out.append(f)
    return out[0], out[1]


def kl_gradient(p: PairDistribution, Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape[0] != p.n:
        raise ValueError(f"P is over {p.n} points but Y has {Y.shape[0]} rows")
    return _forces(p.to_matrix(), Y, 1.0)


def _apply(state: EmbeddingState, direction: np.ndarray, config: OptimizerConfig) -> EmbeddingState:
    it = state.iteration
    update = -config.step_for(state.Y.shape[0]) * direction + config.momentum(it) * state.velocity
    Y = state.Y + update
    if not np.all(np.isfinite(Y)):
        raise DivergedError(it + 1)
    return EmbeddingState(Y, update, it + 1)


def descent_step(
    state: EmbeddingState,
    p: PairDistribution,
    config: OptimizerConfig,
    p_matrix: Optional[np.ndarray] = None,
) -> EmbeddingState:
    """One momentum update; exaggeration applies while ``iteration < exaggeration_iterations``."""
    if state.iteration >= config.total_iterations:
        raise ValueError("state has already completed every configured iteration")
    p_mat = p.to_matrix() if p_matrix is None else p_matrix
    try:
        direction = _forces(p_mat, state.Y, config.exaggeration(state.iteration))
    except FloatingPointError:
        raise DivergedError(state.iteration) from None
    return _apply(state, direction, config)


def initial_state(n: int, config: OptimizerConfig) -> EmbeddingState:
    rng = np.random.Generator(np.random.PCG64(config.seed))
    Y = config.init_scale * rng.standard_normal((n, config.s))
    return EmbeddingState(Y, np.zeros_like(Y), 0)


@dataclass
class RunResult:
    state: EmbeddingState
    snapshots: list[tuple[int, np.ndarray]] = field(default_factory=list)
    objective_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))


def run(
    p: PairDistribution,
    config: OptimizerConfig,
    snapshot_iterations: Sequence[int] = (),
    initial: Optional[EmbeddingState] = None,
) -> RunResult:
    """Full descent from a seeded Gaussian start.

    ``objective_trace[k]`` is the true ``D(P||Q)`` (no exaggeration) after
    ``k`` steps, so the trace has ``total_iterations + 1`` entries. A snapshot
    at iteration ``k`` is ``Y`` after ``k`` steps.
    """
    snaps = sorted(set(int(k) for k in snapshot_iterations))
    if snaps and (snaps[0] < 0 or snaps[-1] > config.total_iterations):
        raise ValueError(f"snapshot iterations must lie in [0, {config.total_iterations}]")
    state = initial.copy() if initial is not None else initial_state(p.n, config)
    if state.Y.shape != (p.n, config.s):
        raise ValueError(f"initial embedding must be {p.n} x {config.s}")
    p_mat = p.to_matrix()
    pm = p.mass[p.mass > 0]
    plogp = float(np.sum(pm * np.log(pm)))

    start = state.iteration
    trace = np.empty(config.total_iterations - start + 1)
    snapshots = []
    forces = np.empty_like(state.Y)
    no_forces = np.empty((0, config.s))
    scratch = np.empty((p.n, p.n))
    while True:
        if state.iteration in snaps:
            snapshots.append((state.iteration, state.Y.copy()))
        last = state.iteration >= config.total_iterations
        alpha = config.exaggeration(state.iteration)
        z, cross = _pair_pass(state.Y, p_mat, alpha, no_forces if last else forces, scratch)
        if not z > 0:
            raise DivergedError(state.iteration)
        trace[state.iteration - start] = plogp + cross + np.log(z)
        if last:
            break
        state = _apply(state, forces, config)
    return RunResult(state, snapshots, trace)


def with_seed(config: OptimizerConfig, seed: int) -> OptimizerConfig:
    return replace(config, seed=seed)
