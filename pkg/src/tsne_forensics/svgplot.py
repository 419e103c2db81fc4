"""Dependency-free, byte-deterministic SVG scatter plots."""

from __future__ import annotations

from pathlib import Path
from typing import Optional
from xml.sax.saxutils import escape

import numpy as np

CANVAS = 800
MARGIN = 0.05
POINT_RADIUS = 2

# viridis sampled at 8 evenly spaced stops
RAMP = (
    (0x44, 0x01, 0x54),
    (0x46, 0x32, 0x7E),
    (0x36, 0x5C, 0x8D),
    (0x27, 0x7F, 0x8E),
    (0x1F, 0xA1, 0x87),
    (0x4A, 0xC1, 0x6D),
    (0xA0, 0xDA, 0x39),
    (0xFD, 0xE7, 0x25),
)


def ramp_color(t: float) -> str:
    """Linear interpolation along the ramp for ``t`` in ``[0, 1]``."""
    t = min(1.0, max(0.0, float(t)))
    pos = t * (len(RAMP) - 1)
    k = min(int(pos), len(RAMP) - 2)
    frac = pos - k
    rgb = [round(a + (b - a) * frac) for a, b in zip(RAMP[k], RAMP[k + 1])]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def scatter_svg(Y, color: Optional[np.ndarray] = None, title: str = "") -> str:
    Y = np.asarray(Y, dtype=np.float64)
    if Y.size == 0:
        Y = np.zeros((0, 2))
    if Y.ndim != 2 or Y.shape[1] != 2:
        raise ValueError("scatter plots need a 2-column embedding")
    lo_px = CANVAS * MARGIN
    span_px = CANVAS * (1 - 2 * MARGIN)

    if Y.shape[0]:
        mins, maxs = Y.min(axis=0), Y.max(axis=0)
        center = (mins + maxs) / 2.0
        span = float(np.max(maxs - mins))
    else:
        center, span = np.zeros(2), 0.0
    if not span > 0:
        span = 1.0

    def to_px(pt):
        x = lo_px + ((pt[0] - center[0]) / span + 0.5) * span_px
        y = lo_px + (0.5 - (pt[1] - center[1]) / span) * span_px
        return x, y

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS}" height="{CANVAS}" '
        f'viewBox="0 0 {CANVAS} {CANVAS}">',
        f'<rect x="0" y="0" width="{CANVAS}" height="{CANVAS}" fill="#ffffff"/>',
    ]
    if title:
        out.append(f'<title>{escape(title)}</title>')
    hi_px = lo_px + span_px
    out.append(
        f'<g stroke="#000000" stroke-width="1" fill="none">'
        f'<line x1="{lo_px:.2f}" y1="{hi_px:.2f}" x2="{hi_px:.2f}" y2="{hi_px:.2f}"/>'
        f'<line x1="{lo_px:.2f}" y1="{lo_px:.2f}" x2="{lo_px:.2f}" y2="{hi_px:.2f}"/>'
        f'</g>'
    )
    out.append(
        f'<g font-family="sans-serif" font-size="12" fill="#000000">'
        f'<text x="{lo_px:.2f}" y="{hi_px + 16:.2f}">{center[0] - span / 2:.6g}</text>'
        f'<text x="{hi_px:.2f}" y="{hi_px + 16:.2f}" text-anchor="end">{center[0] + span / 2:.6g}</text>'
        f'<text x="{lo_px - 4:.2f}" y="{hi_px:.2f}" text-anchor="end">{center[1] - span / 2:.6g}</text>'
        f'<text x="{lo_px - 4:.2f}" y="{lo_px + 12:.2f}" text-anchor="end">{center[1] + span / 2:.6g}</text>'
        f'</g>'
    )

    if color is not None:
        color = np.asarray(color, dtype=np.float64)
        if color.shape != (Y.shape[0],):
            raise ValueError("need one color value per point")
        cmin = float(color.min()) if color.size else 0.0
        cmax = float(color.max()) if color.size else 0.0
        rng = cmax - cmin
        ts = (color - cmin) / rng if rng > 0 else np.full(color.shape, 0.5)
    else:
        ts = np.full(Y.shape[0], 0.5)

    out.append('<g stroke="none">')
    for pt, t in zip(Y, ts):
        x, y = to_px(pt)
        out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{POINT_RADIUS}" fill="{ramp_color(t)}"/>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_scatter(path, Y, color=None, title: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(scatter_svg(Y, color, title), encoding="utf-8")
    return path
