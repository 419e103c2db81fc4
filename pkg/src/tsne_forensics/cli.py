"""Command-line entry point: ``tsne-forensics <command> ...``.

Exit codes: 0 success, 1 usage or bad input, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import nullcontext
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import csvio, datasets, harness
from .affinity import AffinityConfig
from .optimizer import DivergedError, OptimizerConfig
from .svgplot import write_scatter

EXIT_USAGE = 1
EXIT_RUNTIME = 2
THREADS_ENV = "TSNE_FORENSICS_THREADS"

log = logging.getLogger("tsne_forensics")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--config", help="experiment config JSON")
    return p


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _momentum(text: str) -> tuple[tuple[int, float], ...]:
    out = []
    for part in text.split(","):
        start, gamma = part.split(":")
        out.append((int(start), float(gamma)))
    return tuple(out)


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="tsne-forensics", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], help="write a point cloud CSV")
    g.add_argument("generator", choices=sorted(harness.GENERATORS))
    g.add_argument("--n", type=int)
    g.add_argument("--d", type=int)
    g.add_argument("--k", type=int)
    g.add_argument("--per-cluster", type=int)
    g.add_argument("--sigma", type=float)
    g.add_argument("--n-half", type=int)
    g.add_argument("--threshold-exponent", type=float)
    g.add_argument("--out", help="CSV path (default OUT_DIR/<generator>.csv)")

    e = sub.add_parser("embed", parents=[common], help="run t-SNE on a point CSV")
    e.add_argument("points")
    bw = e.add_mutually_exclusive_group()
    bw.add_argument("--sigma", type=float, help="fixed bandwidth; skips the perplexity search")
    bw.add_argument("--perplexity", type=float)
    e.add_argument("--iterations", type=int)
    e.add_argument("--exaggeration-iterations", type=int)
    e.add_argument("--alpha", type=float)
    e.add_argument("--step-size", type=float, help="default n / (4 alpha)")
    e.add_argument("--init-scale", type=float)
    e.add_argument("--dims", type=int)
    e.add_argument("--momentum", type=_momentum, help="schedule like 0:0.5,250:0.8")
    e.add_argument("--snapshots", type=_int_list, help="comma-separated iterations")

    d = sub.add_parser("diagnose", parents=[common], help="compute diagnostics for an embedding")
    d.add_argument("--points", required=True)
    d.add_argument("--embedding", required=True)
    d.add_argument("--check", action="append", choices=harness.CHECKS, required=True)
    d.add_argument("--fraction", type=float, default=0.9)
    d.add_argument("--g", type=float, default=5.0)
    d.add_argument("--far-threshold", type=float, default=0.2)
    d.add_argument("--r", type=float, default=0.1)
    d.add_argument("--sigma", type=float)
    d.add_argument("--perplexity", type=float)
    d.add_argument("--out", help="report path (default OUT_DIR/report.json)")

    x = sub.add_parser("experiment", parents=[common], help="run a named reproduction")
    x.add_argument("name", choices=harness.EXPERIMENTS)
    x.add_argument("--full", action="store_true", help="sphere-d100000 at full dimension")
    x.add_argument("--n", type=int, help="override the point count (smoke runs)")
    x.add_argument("--iterations", type=int, help="override total iterations (smoke runs)")

    p = sub.add_parser("plot", parents=[common], help="render a 2-D embedding CSV as SVG")
    p.add_argument("embedding")
    p.add_argument("--color-by", help="column of the embedding CSV to color by")
    p.add_argument("--color-file", help="separate CSV holding the color column")
    p.add_argument("--color-column", default="label")
    p.add_argument("--title", default="")
    p.add_argument("--out", help="SVG path (default OUT_DIR/<embedding>.svg)")

    c = sub.add_parser("pca", parents=[common], help="project points on their top principal components")
    c.add_argument("points")
    c.add_argument("--k", type=int, default=2)
    c.add_argument("--out", help="CSV path (default OUT_DIR/pca.csv)")
    return parser


# --- commands ------------------------------------------------------------


def cmd_generate(args) -> int:
    names = {"sphere": ("n", "d"), "split-sphere": ("n", "d", "threshold_exponent"),
             "simplex-clusters": ("k", "per_cluster", "sigma"), "doubled-frame": ("n_half",),
             "equidistant": ("n",)}
    required = {"sphere": ("n", "d"), "split-sphere": ("n", "d"),
                "simplex-clusters": ("k", "per_cluster", "sigma"), "doubled-frame": ("n_half",),
                "equidistant": ("n",)}
    params = {k: getattr(args, k) for k in names[args.generator] if getattr(args, k) is not None}
    missing = [k for k in required[args.generator] if k not in params]
    if missing:
        raise UsageError(f"{args.generator} needs " + ", ".join("--" + m.replace("_", "-") for m in missing))
    cloud = harness.DatasetSpec(args.generator, params, args.seed).build()
    out = Path(args.out) if args.out else Path(args.out_dir) / f"{args.generator}.csv"
    csv_path, meta_path = csvio.write_point_cloud(out, cloud)
    print(f"wrote {cloud.n} x {cloud.d} points to {csv_path} (metadata {meta_path})")
    return 0


def _embed_config(args) -> harness.ExperimentConfig:
    cfg = harness.ExperimentConfig.from_json(Path(args.config).read_text()) if args.config else harness.ExperimentConfig()
    if args.sigma is not None:
        cfg.affinity = AffinityConfig(sigma=args.sigma)
    elif args.perplexity is not None:
        cfg.affinity = AffinityConfig(perplexity=args.perplexity)
    opt = asdict(cfg.optimizer)
    overrides = {"total_iterations": args.iterations, "exaggeration_iterations": args.exaggeration_iterations,
                 "alpha": args.alpha, "step_size": args.step_size, "init_scale": args.init_scale,
                 "s": args.dims, "momentum_schedule": args.momentum}
    opt.update({k: v for k, v in overrides.items() if v is not None})
    if not args.config or args.seed != 0:
        opt["seed"] = args.seed
    if args.iterations is not None and args.exaggeration_iterations is None:
        opt["exaggeration_iterations"] = min(opt["exaggeration_iterations"], args.iterations)
    cfg.optimizer = OptimizerConfig(**opt)
    if args.snapshots is not None:
        cfg.snapshot_iterations = tuple(args.snapshots)
    else:
        cfg.snapshot_iterations = tuple(k for k in cfg.snapshot_iterations if k <= cfg.optimizer.total_iterations)
    cfg.output_dir = args.out_dir
    return cfg


def cmd_embed(args) -> int:
    cloud = csvio.read_points(args.points)
    cfg = _embed_config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json() + "\n")
    try:
        outcome = harness.embed(cloud, cfg, out)
    except DivergedError as exc:
        print(f"error: {exc}; see {out / 'manifest.json'}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"final objective {outcome.objective_trace[-1]:.6g}; manifest {out / 'manifest.json'}")
    return 0


def cmd_diagnose(args) -> int:
    cloud = csvio.read_points(args.points)
    Y = csvio.read_matrix(args.embedding)
    if Y.shape[0] != cloud.n:
        raise UsageError(f"row-count mismatch: {args.points} has {cloud.n} rows, {args.embedding} has {Y.shape[0]}")
    checks = []
    for kind in args.check:
        check = {"check": kind}
        if kind == "covering-ball":
            check["fraction"] = args.fraction
        elif kind == "grid":
            check.update(g=args.g, far_threshold=args.far_threshold)
        elif kind == "ball":
            check["r"] = args.r
        elif kind == "blocks":
            check["sigma"] = 1.0 if args.sigma is None else args.sigma
        elif kind in ("uniformity", "uniform-divergence"):
            if args.sigma is not None:
                check["sigma"] = args.sigma
            else:
                check["perplexity"] = harness.DEFAULT_PERPLEXITY if args.perplexity is None else args.perplexity
        checks.append(check)
    report = harness.diagnose(cloud, Y, checks)
    out = Path(args.out) if args.out else Path(args.out_dir) / "report.json"
    csvio.write_json(out, report.to_dict())
    for stat in report.statistics:
        print(f"{stat.name} = {json.dumps(stat.to_dict()['value'])}  [{stat.theorem.value}]")
    print(f"wrote {out}")
    return 0


def cmd_experiment(args) -> int:
    summary = harness.run_experiment(args.name, args.out_dir, seed=args.seed, full=args.full,
                                     n=args.n, iterations=args.iterations)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_plot(args) -> int:
    header, data = csvio.read_table(args.embedding)
    coords = [k for k, h in enumerate(header) if h != "label"]
    if len(coords) != 2:
        raise UsageError(f"plot needs a 2-column embedding, {args.embedding} has {len(coords)} coordinate columns")
    color = None
    if args.color_file:
        cheader, cdata = csvio.read_table(args.color_file)
        if args.color_column not in cheader:
            raise UsageError(f"{args.color_file} has no column {args.color_column!r}")
        color = cdata[:, cheader.index(args.color_column)]
    elif args.color_by:
        if args.color_by not in header:
            raise UsageError(f"{args.embedding} has no column {args.color_by!r}")
        color = data[:, header.index(args.color_by)]
    if color is not None and color.shape[0] != data.shape[0]:
        raise UsageError("color column length does not match the embedding")
    out = Path(args.out) if args.out else Path(args.out_dir) / (Path(args.embedding).stem + ".svg")
    write_scatter(out, data[:, coords], color, args.title)
    print(f"wrote {out}")
    return 0


def cmd_pca(args) -> int:
    cloud = csvio.read_points(args.points)
    if not 1 <= args.k <= cloud.d:
        raise UsageError(f"--k must lie in [1, {cloud.d}]")
    res = datasets.pca(cloud, args.k)
    out = Path(args.out) if args.out else Path(args.out_dir) / "pca.csv"
    csvio.write_points(out, res.projection, cloud.labels)
    print(f"top-{args.k} variance fraction {res.explained_fraction:.6f}; wrote {out}")
    return 0


COMMANDS = {"generate": cmd_generate, "embed": cmd_embed, "diagnose": cmd_diagnose,
            "experiment": cmd_experiment, "plot": cmd_plot, "pca": cmd_pca}


def _thread_limit():
    value = os.environ.get(THREADS_ENV)
    if not value:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(1, int(value)))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit():
            return COMMANDS[args.command](args)
    except (UsageError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RuntimeError, AssertionError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
