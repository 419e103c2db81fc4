"""CSV and JSON persistence for point clouds, embeddings and traces.

Point files have a header ``c0,c1,...[,label]`` and one row per point; floats
are written with ``repr`` (shortest string that round-trips).
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .datasets import PointCloud


def format_float(x: float) -> str:
    return repr(float(x))


def write_points(path, points: np.ndarray, labels: Optional[np.ndarray] = None) -> Path:
    path = Path(path)
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("points must be 2-D")
    header = [f"c{k}" for k in range(points.shape[1])]
    if labels is not None:
        header.append("label")
    lines = [",".join(header)]
    for i, row in enumerate(points):
        cells = [format_float(v) for v in row]
        if labels is not None:
            cells.append(str(int(labels[i])))
        lines.append(",".join(cells))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    return path


def read_table(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="ascii") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = [[float(c) for c in r] for r in reader if r]
    if any(len(r) != len(header) for r in rows):
        raise ValueError(f"{path}: ragged rows")
    data = np.array(rows, dtype=np.float64).reshape(len(rows), len(header))
    return header, data


def read_points(path) -> PointCloud:
    header, data = read_table(path)
    coord_cols = [k for k, h in enumerate(header) if h != "label"]
    labels = None
    if "label" in header:
        labels = data[:, header.index("label")].astype(np.int64)
    meta_path = sidecar_path(path)
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {"source": str(path)}
    return PointCloud(data[:, coord_cols], labels, meta)


def read_matrix(path) -> np.ndarray:
    """Coordinate columns only (any ``label`` column is dropped)."""
    header, data = read_table(path)
    keep = [k for k, h in enumerate(header) if h != "label"]
    return data[:, keep]


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def write_point_cloud(path, cloud: PointCloud) -> tuple[Path, Path]:
    csv_path = write_points(path, cloud.points, cloud.labels)
    meta_path = sidecar_path(csv_path)
    write_json(meta_path, cloud.metadata)
    return csv_path, meta_path


def write_trace(path, trace: np.ndarray, start: int = 0) -> Path:
    path = Path(path)
    lines = ["iteration,objective"]
    lines += [f"{start + k},{format_float(v)}" for k, v in enumerate(trace)]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    return path


def write_json(path, doc: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_json(path) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))
