import json
import os
import subprocess
import sys

import numpy as np
import pytest

from tsne_forensics import csvio
from tsne_forensics.cli import main


def _cli(*args, cwd=None, env=None):
    return subprocess.run([sys.executable, "-m", "tsne_forensics", *args], cwd=cwd, env=env,
                          capture_output=True, text=True)


def test_generate_embed_diagnose_plot_pca(tmp_path):
    assert main(["generate", "sphere", "--n", "40", "--d", "5", "--seed", "7", "--out-dir", str(tmp_path)]) == 0
    pts = tmp_path / "sphere.csv"
    assert (tmp_path / "sphere.meta.json").exists()
    run = tmp_path / "run"
    assert main(["embed", str(pts), "--perplexity", "10", "--iterations", "30", "--out-dir", str(run)]) == 0
    man = json.loads((run / "manifest.json").read_text())
    assert man["snapshots"] == {"10": "snapshots/iter_00010.csv"}
    assert main(["diagnose", "--points", str(pts), "--embedding", str(run / "final.csv"),
                 "--check", "covering-ball", "--fraction", "0.9", "--check", "grid", "--g", "2",
                 "--out-dir", str(run)]) == 0
    report = json.loads((run / "report.json").read_text())
    names = {s["name"] for s in report["statistics"]}
    assert {"covering_ball_radius", "grid_fraction_alone"} <= names
    assert main(["plot", str(run / "final.csv"), "--color-file", str(pts), "--color-column", "c0",
                 "--out", str(run / "f.svg")]) == 0
    assert (run / "f.svg").read_text().count("<circle") == 40
    assert main(["pca", str(pts), "--k", "2", "--out", str(tmp_path / "p.csv")]) == 0
    assert csvio.read_matrix(tmp_path / "p.csv").shape == (40, 2)


def test_embed_from_config(tmp_path):
    assert main(["generate", "doubled-frame", "--n-half", "5", "--out-dir", str(tmp_path)]) == 0
    cfg = {"affinity": {"sigma": 1.0, "perplexity": None},
           "optimizer": {"total_iterations": 20, "exaggeration_iterations": 5, "seed": 2},
           "snapshot_iterations": [5, 20]}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    out = tmp_path / "run"
    assert main(["embed", str(tmp_path / "doubled-frame.csv"), "--config", str(tmp_path / "cfg.json"),
                 "--out-dir", str(out)]) == 0
    written = json.loads((out / "config.json").read_text())
    assert written["affinity"]["sigma"] == 1.0 and written["optimizer"]["seed"] == 2
    assert sorted(json.loads((out / "manifest.json").read_text())["snapshots"]) == ["20", "5"]


def test_usage_errors_exit_1(tmp_path):
    assert _cli("frobnicate").returncode == 1
    assert _cli("generate", "sphere", "--n", "10").returncode == 1
    r = _cli("generate", "sphere", "--n", "-2", "--d", "3", "--out-dir", str(tmp_path))
    assert r.returncode == 1 and "error" in r.stderr
    assert _cli("embed", str(tmp_path / "missing.csv")).returncode == 1


def test_row_mismatch_is_rejected(tmp_path):
    csvio.write_points(tmp_path / "x.csv", np.eye(4))
    csvio.write_points(tmp_path / "y.csv", np.zeros((3, 2)))
    r = _cli("diagnose", "--points", str(tmp_path / "x.csv"), "--embedding", str(tmp_path / "y.csv"),
             "--check", "enclosing")
    assert r.returncode == 1 and "mismatch" in r.stderr


def test_divergence_exit_2(tmp_path):
    csvio.write_points(tmp_path / "x.csv", np.eye(4))
    r = _cli("embed", str(tmp_path / "x.csv"), "--sigma", "1", "--iterations", "3", "--step-size", "1e308",
             "--out-dir", str(tmp_path / "run"))
    assert r.returncode == 2
    assert json.loads((tmp_path / "run" / "manifest.json").read_text())["status"] == "diverged"


def test_thread_env_and_experiment(tmp_path):
    env = dict(os.environ, TSNE_FORENSICS_THREADS="1")
    r = _cli("experiment", "split-sphere-d20", "--n", "60", "--iterations", "20", "--seed", "1",
             "--out-dir", str(tmp_path), env=env)
    assert r.returncode == 0, r.stderr
    summary = json.loads(r.stdout)
    assert summary["experiment"] == "split-sphere-d20" and 0.5 <= summary["two_means_agreement"] <= 1.0
