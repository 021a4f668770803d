"""Minimal SVG heatmaps, one <rect> per matrix cell."""

from __future__ import annotations

import numpy as np

# perceptually ordered anchors (dark blue -> teal -> yellow)
_ANCHORS = np.array(
    [
        [0.267, 0.005, 0.329],
        [0.230, 0.322, 0.546],
        [0.128, 0.567, 0.551],
        [0.369, 0.789, 0.383],
        [0.993, 0.906, 0.144],
    ]
)


def colour(v: float) -> str:
    v = min(max(float(v), 0.0), 1.0)
    pos = v * (len(_ANCHORS) - 1)
    i = min(int(pos), len(_ANCHORS) - 2)
    frac = pos - i
    rgb = (1 - frac) * _ANCHORS[i] + frac * _ANCHORS[i + 1]
    r, g, b = (int(round(255 * c)) for c in rgb)
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap_svg(m: np.ndarray, cell: int = 8, symmetric: bool = False) -> str:
    m = np.asarray(m, dtype=np.float64)
    rows, cols = m.shape
    if symmetric:
        hi = float(np.max(np.abs(m)))
        lo = -hi
    else:
        lo, hi = float(m.min()), float(m.max())
    span = hi - lo
    norm = np.full(m.shape, 0.5) if span == 0 else (m - lo) / span
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{cols * cell}" height="{rows * cell}" '
        f'viewBox="0 0 {cols * cell} {rows * cell}" shape-rendering="crispEdges">'
    ]
    for i in range(rows):
        for j in range(cols):
            out.append(
                f'<rect x="{j * cell}" y="{i * cell}" width="{cell}" height="{cell}" fill="{colour(norm[i, j])}"/>'
            )
    out.append("</svg>")
    return "\n".join(out) + "\n"
