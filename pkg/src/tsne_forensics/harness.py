"""Experiment configs, the generate -> embed -> diagnose -> plot pipeline, and named runs."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from . import csvio, datasets, diagnostics
from .affinity import AffinityConfig, affinities, uniformity_statistic
from .datasets import PointCloud
from .divergences import PairDistribution, chi_squared, kl_divergence
from .optimizer import DivergedError, OptimizerConfig, low_dim_affinities, run
from .svgplot import write_scatter

log = logging.getLogger(__name__)

DEFAULT_SNAPSHOTS = (10, 100, 500, 510, 600, 1000)
DEFAULT_PERPLEXITY = 30.0

GENERATORS: dict[str, Callable[..., PointCloud]] = {
    "sphere": datasets.sample_sphere,
    "split-sphere": datasets.sample_split_sphere,
    "simplex-clusters": datasets.simplex_clusters,
    "doubled-frame": datasets.doubled_frame,
    "equidistant": datasets.equidistant_simplex,
}
_SEEDED = {"sphere", "split-sphere", "simplex-clusters"}


@dataclass
class DatasetSpec:
    generator: str
    params: dict[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None

    def build(self) -> PointCloud:
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}; choose from {sorted(GENERATORS)}")
        kwargs = dict(self.params)
        if self.generator in _SEEDED:
            kwargs["seed"] = 0 if self.seed is None else self.seed
        return GENERATORS[self.generator](**kwargs)


@dataclass
class ExperimentConfig:
    dataset: Optional[DatasetSpec] = None
    affinity: AffinityConfig = field(default_factory=lambda: AffinityConfig(perplexity=DEFAULT_PERPLEXITY))
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    snapshot_iterations: tuple[int, ...] = DEFAULT_SNAPSHOTS
    diagnostics: list[dict[str, Any]] = field(default_factory=list)
    output_dir: str = "."

    def to_dict(self) -> dict[str, Any]:
        opt = asdict(self.optimizer)
        opt["momentum_schedule"] = [list(x) for x in self.optimizer.momentum_schedule]
        return {
            "dataset": asdict(self.dataset) if self.dataset is not None else None,
            "affinity": asdict(self.affinity),
            "optimizer": opt,
            "snapshot_iterations": list(self.snapshot_iterations),
            "diagnostics": [dict(d) for d in self.diagnostics],
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ExperimentConfig":
        ds = doc.get("dataset")
        opt = dict(doc.get("optimizer", {}))
        if "momentum_schedule" in opt:
            opt["momentum_schedule"] = tuple(tuple(x) for x in opt["momentum_schedule"])
        return cls(
            dataset=DatasetSpec(**ds) if ds else None,
            affinity=AffinityConfig(**doc["affinity"]) if "affinity" in doc else AffinityConfig(perplexity=DEFAULT_PERPLEXITY),
            optimizer=OptimizerConfig(**opt),
            snapshot_iterations=tuple(int(k) for k in doc.get("snapshot_iterations", DEFAULT_SNAPSHOTS)),
            diagnostics=[dict(d) for d in doc.get("diagnostics", [])],
            output_dir=doc.get("output_dir", "."),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON, ignoring where outputs go."""
        doc = self.to_dict()
        doc.pop("output_dir")
        canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


@dataclass
class RunManifest:
    config_hash: str
    status: str = "ok"
    failure_iteration: Optional[int] = None
    points_path: Optional[str] = None
    snapshots: dict[str, str] = field(default_factory=dict)
    objective_trace: Optional[str] = None
    diagnostics: Optional[str] = None
    step_size: Optional[float] = None
    timings: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def write(self, path) -> Path:
        return csvio.write_json(path, self.to_dict())


def snapshot_name(iteration: int) -> str:
    return f"iter_{iteration:05d}"


# --- pipeline ------------------------------------------------------------


@dataclass
class EmbedOutcome:
    manifest: RunManifest
    P: PairDistribution
    sigmas: np.ndarray
    achieved_perplexities: np.ndarray
    snapshots: dict[int, np.ndarray]
    objective_trace: Optional[np.ndarray]
    final: Optional[np.ndarray]


def embed(cloud: PointCloud, config: ExperimentConfig, out_dir) -> EmbedOutcome:
    """Affinities, descent, and on-disk snapshots/trace/manifest under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(config.config_hash(), step_size=config.optimizer.step_for(cloud.n))

    t0 = time.perf_counter()
    P, sigmas, achieved = affinities(cloud, config.affinity)
    manifest.timings["affinity_s"] = time.perf_counter() - t0
    if config.affinity.perplexity is not None:
        off = np.abs(achieved - config.affinity.perplexity) > 1e-3 * config.affinity.perplexity
        if np.any(off) and config.affinity.perplexity < cloud.n - 1:
            log.warning("%d of %d rows missed the perplexity target (worst achieved %.6g)",
                        int(off.sum()), cloud.n, float(achieved[np.argmax(np.abs(achieved - config.affinity.perplexity))]))

    t0 = time.perf_counter()
    try:
        result = run(P, config.optimizer, config.snapshot_iterations)
    except DivergedError as exc:
        manifest.status = "diverged"
        manifest.failure_iteration = exc.iteration
        manifest.timings["optimize_s"] = time.perf_counter() - t0
        manifest.write(out / "manifest.json")
        raise
    manifest.timings["optimize_s"] = time.perf_counter() - t0

    snaps = {}
    for it, Y in result.snapshots:
        path = csvio.write_points(out / "snapshots" / f"{snapshot_name(it)}.csv", Y)
        manifest.snapshots[str(it)] = str(path.relative_to(out))
        snaps[it] = Y
    trace_path = csvio.write_trace(out / "trace.csv", result.objective_trace)
    manifest.objective_trace = str(trace_path.relative_to(out))
    csvio.write_points(out / "final.csv", result.state.Y)
    manifest.write(out / "manifest.json")
    return EmbedOutcome(manifest, P, sigmas, achieved, snaps, result.objective_trace, result.state.Y)


CHECKS = ("covering-ball", "ball", "enclosing", "grid", "blocks", "uniformity", "uniform-divergence")


def diagnose(
    cloud: PointCloud,
    Y: np.ndarray,
    checks: list[dict[str, Any]],
    P: Optional[PairDistribution] = None,
) -> diagnostics.DiagnosticsReport:
    """Run the requested checks. ``P`` is rebuilt from ``cloud`` when a check needs it."""
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape[0] != cloud.n:
        raise ValueError(f"embedding has {Y.shape[0]} rows but the point cloud has {cloud.n}")
    report = diagnostics.DiagnosticsReport()
    T = diagnostics.Theorem

    def p_for(check) -> PairDistribution:
        if "sigma" in check:
            return affinities(cloud, AffinityConfig(sigma=float(check["sigma"])))[0]
        if "perplexity" in check:
            return affinities(cloud, AffinityConfig(perplexity=float(check["perplexity"])))[0]
        if P is None:
            raise ValueError(f"check {check['check']!r} needs sigma or perplexity")
        return P

    for check in checks:
        kind = check["check"]
        if kind == "covering-ball":
            f = float(check.get("fraction", 0.9))
            cb = diagnostics.covering_ball(Y, f)
            report.add("covering_ball_center_index", cb.center_index, T.LEMMA_SMALL_KL, fraction=f)
            report.add("covering_ball_radius", cb.radius, T.LEMMA_SMALL_KL, fraction=f)
        elif kind == "ball":
            r = float(check.get("r", 0.1))
            res = diagnostics.theorem_ball_check(Y, r)
            for key in ("fraction_in_r_ball", "enclosing_radius", "radius_over_sqrt_r", "passes"):
                report.add(f"theorem_ball_{key}", res[key], T.THM_SPHERE, r=r)
        elif kind == "enclosing":
            ball = diagnostics.enclosing_ball(Y)
            report.add("enclosing_radius", ball.radius, T.THM_SPHERE)
            report.add("enclosing_center", ball.center, T.THM_SPHERE)
        elif kind == "grid":
            g = float(check.get("g", 5.0))
            far = float(check.get("far_threshold", 0.2))
            res = diagnostics.grid_collision_stats(cloud.points, Y, g, far)
            for key, val in res.items():
                report.add(f"grid_{key}", val, T.PROP_VOLUME, g=g, far_threshold=far)
        elif kind == "blocks":
            sigma = float(check.get("sigma", 1.0))
            p = affinities(cloud, AffinityConfig(sigma=sigma))[0]
            q, _ = low_dim_affinities(Y)
            labels = cloud.labels if cloud.labels is not None else np.repeat([0, 1], [cloud.n // 2, cloud.n - cloud.n // 2])
            res = diagnostics.block_stats(p, q, diagnostics.BlockPartition.from_labels(labels), sigma)
            for key, val in res.items():
                report.add(f"blocks_{key}", val, T.PROP_DOUBLED_FRAME, sigma=sigma)
        elif kind == "uniformity":
            p = p_for(check)
            params = {k: v for k, v in check.items() if k != "check"}
            report.add("uniformity_statistic", uniformity_statistic(p), T.LEMMA_CONCENTRATION, **params)
        elif kind == "uniform-divergence":
            p = p_for(check)
            u = PairDistribution.uniform(p.n)
            params = {k: v for k, v in check.items() if k != "check"}
            report.add("kl_p_uniform", kl_divergence(p, u), T.THM_SPHERE, **params)
            report.add("chi2_p_uniform", chi_squared(p, u), T.THM_SPHERE, **params)
            q, _ = low_dim_affinities(Y)
            report.add("kl_p_q", kl_divergence(p, q), T.LEMMA_SMALL_KL, **params)
        else:
            raise ValueError(f"unknown check {kind!r}; choose from {CHECKS}")
    return report


def two_means(Y: np.ndarray, max_iter: int = 300) -> np.ndarray:
    """Deterministic Lloyd iterations for k = 2, seeded by a farthest pair."""
    Y = np.asarray(Y, dtype=np.float64)
    c = Y.mean(axis=0)
    a = Y[np.argmax(np.sum((Y - c) ** 2, axis=1))]
    b = Y[np.argmax(np.sum((Y - a) ** 2, axis=1))]
    centers = np.array([a, b])
    assign = None
    for _ in range(max_iter):
        d = np.sum((Y[:, None, :] - centers[None]) ** 2, axis=2)
        new = np.argmin(d, axis=1)
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        for k in range(2):
            if np.any(assign == k):
                centers[k] = Y[assign == k].mean(axis=0)
    return assign


def label_agreement(assign: np.ndarray, labels: np.ndarray) -> float:
    """Best-matching agreement between two binary labelings."""
    same = float(np.mean(assign == labels))
    return max(same, 1.0 - same)


def cluster_distance_ratio(Y: np.ndarray, labels: np.ndarray) -> float:
    """Mean within-label distance over mean between-label distance."""
    dist = diagnostics.pairwise_distances(Y)
    same = labels[:, None] == labels[None, :]
    off = ~np.eye(len(labels), dtype=bool)
    return float(dist[same & off].mean() / dist[~same].mean())


# --- named experiments ---------------------------------------------------


@dataclass
class ExperimentSpec:
    name: str
    config: ExperimentConfig
    color: str  # "coord0", "coord1" or "label"
    warn: Optional[str] = None


SPHERE_DIMS = {"sphere-d2": 2, "sphere-d3": 3, "sphere-d5": 5, "sphere-d20": 20, "sphere-d100000": 100000}
REDUCED_D100000 = 20000
EXPERIMENTS = ("figure1-simplex", *SPHERE_DIMS, "split-sphere-d20", "doubled-frame")


def experiment_spec(name: str, seed: int = 0, full: bool = False, n: Optional[int] = None,
                    iterations: Optional[int] = None) -> ExperimentSpec:
    """Preconfigured pipelines. ``n`` and ``iterations`` shrink runs for smoke tests."""
    if name not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {name!r}; choose from {EXPERIMENTS}")
    opt = OptimizerConfig(seed=seed)
    if iterations is not None:
        opt = OptimizerConfig(seed=seed, total_iterations=iterations,
                              exaggeration_iterations=min(opt.exaggeration_iterations, iterations // 2))
    snaps = tuple(k for k in DEFAULT_SNAPSHOTS if k <= opt.total_iterations)
    npts = 1000 if n is None else n
    warn = None
    if name == "figure1-simplex":
        per = 100 if n is None else max(1, n // 10)
        ds = DatasetSpec("simplex-clusters", {"k": 10, "per_cluster": per, "sigma": 0.2}, seed)
        cfg = ExperimentConfig(ds, AffinityConfig(perplexity=DEFAULT_PERPLEXITY), opt, (opt.total_iterations,),
                               [{"check": "enclosing"}, {"check": "covering-ball", "fraction": 0.9}])
        return ExperimentSpec(name, cfg, "label")
    if name in SPHERE_DIMS:
        d = SPHERE_DIMS[name]
        if d == 100000:
            cost = npts * npts * (d if full else REDUCED_D100000)
            warn = (f"{name}: affinity construction costs about n^2 d = {cost:.2e} multiply-adds"
                    + ("" if full else f"; running at d={REDUCED_D100000} (pass --full for d=100000)"))
            if not full:
                d = REDUCED_D100000
        ds = DatasetSpec("sphere", {"n": npts, "d": d}, seed)
        checks = [{"check": "ball", "r": 0.1}, {"check": "grid", "g": 5.0},
                  {"check": "uniformity", "perplexity": DEFAULT_PERPLEXITY},
                  {"check": "uniform-divergence", "perplexity": DEFAULT_PERPLEXITY}]
        cfg = ExperimentConfig(ds, AffinityConfig(perplexity=DEFAULT_PERPLEXITY), opt, snaps, checks)
        return ExperimentSpec(name, cfg, "coord0", warn)
    if name == "split-sphere-d20":
        ds = DatasetSpec("split-sphere", {"n": npts, "d": 20}, seed)
        sp = tuple(k for k in (10, 500, 510, 1000) if k <= opt.total_iterations)
        checks = [{"check": "ball", "r": 0.1}, {"check": "grid", "g": 5.0}]
        cfg = ExperimentConfig(ds, AffinityConfig(perplexity=DEFAULT_PERPLEXITY), opt, sp, checks)
        return ExperimentSpec(name, cfg, "coord1")
    # doubled-frame
    half = 50 if n is None else max(1, n // 2)
    ds = DatasetSpec("doubled-frame", {"n_half": half}, None)
    checks = [{"check": "blocks", "sigma": 1.0}, {"check": "covering-ball", "fraction": 0.5}]
    cfg = ExperimentConfig(ds, AffinityConfig(sigma=1.0), opt, snaps, checks)
    return ExperimentSpec(name, cfg, "label")


def _color(cloud: PointCloud, how: str) -> np.ndarray:
    if how == "label" and cloud.labels is not None:
        return cloud.labels.astype(np.float64)
    if how == "coord1" and cloud.d > 1:
        return cloud.points[:, 1]
    return cloud.points[:, 0]


def run_experiment(name: str, out_root, seed: int = 0, full: bool = False,
                   n: Optional[int] = None, iterations: Optional[int] = None) -> dict[str, Any]:
    spec = experiment_spec(name, seed=seed, full=full, n=n, iterations=iterations)
    if spec.warn:
        log.warning(spec.warn)
    out = Path(out_root) / name
    spec.config.output_dir = str(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(spec.config.to_json() + "\n")

    cloud = spec.config.dataset.build()
    csvio.write_point_cloud(out / "points.csv", cloud)
    outcome = embed(cloud, spec.config, out)
    color = _color(cloud, spec.color)

    figures = out / "figures"
    for it in sorted(outcome.snapshots):
        write_scatter(figures / f"{snapshot_name(it)}.svg", outcome.snapshots[it], color,
                      title=f"{name} after {it} iterations")

    summary: dict[str, Any] = {"experiment": name, "n": cloud.n, "d": cloud.d,
                               "final_objective": float(outcome.objective_trace[-1])}
    if name == "figure1-simplex":
        res = datasets.pca(cloud, 2)
        write_scatter(figures / "pca.svg", res.projection, color, title="first two principal components")
        write_scatter(figures / "tsne.svg", outcome.final, color, title="t-SNE output")
        summary["pca_top2_variance_fraction"] = res.explained_fraction
        summary["within_between_distance_ratio"] = cluster_distance_ratio(outcome.final, cloud.labels)
    elif name == "split-sphere-d20":
        write_scatter(figures / "data.svg", cloud.points[:, :2], cloud.points[:, 1],
                      title="first two coordinates, colored by second coordinate")
        write_scatter(figures / "final_by_first_coordinate.svg", outcome.final, cloud.points[:, 0],
                      title="final output colored by first coordinate")
        summary["two_means_agreement"] = label_agreement(two_means(outcome.final), cloud.labels)

    eoe = spec.config.optimizer.exaggeration_iterations
    if eoe in outcome.snapshots:
        summary["end_of_exaggeration_enclosing_radius"] = diagnostics.enclosing_ball(outcome.snapshots[eoe]).radius
    summary["final_enclosing_radius"] = diagnostics.enclosing_ball(outcome.final).radius

    report = diagnose(cloud, outcome.final, spec.config.diagnostics, P=outcome.P)
    report_path = csvio.write_json(out / "report.json", report.to_dict())
    outcome.manifest.diagnostics = str(report_path.relative_to(out))
    outcome.manifest.points_path = "points.csv"
    outcome.manifest.write(out / "manifest.json")
    csvio.write_json(out / "summary.json", summary)
    return summary
