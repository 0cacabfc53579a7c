"""Minimal deterministic SVG heatmaps (a pure function of the matrix).

CSV files are the normative experiment outputs; these renders are a
convenience. The colormap is a fixed 11-anchor viridis-style gradient;
NaN cells render white.
"""
from __future__ import annotations

import math

import numpy as np

_ANCHORS = (
    (68, 1, 84), (72, 36, 117), (65, 68, 135), (53, 95, 141), (42, 120, 142),
    (33, 145, 140), (34, 168, 132), (68, 191, 112), (122, 209, 81),
    (189, 223, 38), (253, 231, 37),
)

CELL = 18


def _color(t: float) -> str:
    t = min(1.0, max(0.0, t))
    pos = t * (len(_ANCHORS) - 1)
    i = min(len(_ANCHORS) - 2, int(pos))
    f = pos - i
    r, g, b = (
        round(a + (b_ - a) * f) for a, b_ in zip(_ANCHORS[i], _ANCHORS[i + 1])
    )
    return f"rgb({r},{g},{b})"


def svg_heatmap(matrix, title: str = "") -> str:
    """Render a 2D matrix (NaN = empty cell) to an SVG string. Values are
    normalized over the finite range of the matrix."""
    mat = np.asarray(matrix, dtype=float)
    rows, cols = mat.shape
    finite = mat[np.isfinite(mat)]
    vmin = float(finite.min()) if finite.size else 0.0
    vmax = float(finite.max()) if finite.size else 1.0
    span = vmax - vmin
    header = 24 if title else 0
    width, height = cols * CELL, rows * CELL + header
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="4" y="16" font-family="monospace" font-size="12">{title}</text>'
        )
    for i in range(rows):
        for j in range(cols):
            v = mat[i, j]
            if math.isnan(v):
                continue
            t = (v - vmin) / span if span > 0 else 0.5
            parts.append(
                f'<rect x="{j * CELL}" y="{i * CELL + header}" width="{CELL}" '
                f'height="{CELL}" fill="{_color(t)}"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_svg_heatmap(matrix, path, title: str = "") -> None:
    with open(path, "w") as fh:
        fh.write(svg_heatmap(matrix, title))
