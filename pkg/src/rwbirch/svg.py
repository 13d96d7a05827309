"""Minimal, byte-deterministic SVG charts: a labelled scatter and a line plot."""
from __future__ import annotations

from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#bcbd22", "#17becf", "#7f7f7f")
OUTLIER_COLOR = "#b0b0b0"

WIDTH, HEIGHT, MARGIN = 480, 400, 48


def color_for(label: int) -> str:
    return OUTLIER_COLOR if label < 0 else PALETTE[label % len(PALETTE)]


def _scale(values: np.ndarray, lo_px: float, hi_px: float) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.full(values.shape, (lo_px + hi_px) / 2)
    return lo_px + (values - lo) / (hi - lo) * (hi_px - lo_px)


def _frame(title: str, xlabel: str, ylabel: str) -> list:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN / 2}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{MARGIN}" y2="{MARGIN / 2 + 10}" stroke="black"/>',
        f'<text x="{WIDTH / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="14" y="{HEIGHT / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {HEIGHT / 2:.1f})">{escape(ylabel)}</text>',
    ]


def scatter_svg(x: Sequence[float], y: Sequence[float], labels: Sequence[int], title: str = "",
                xlabel: str = "", ylabel: str = "") -> str:
    """One circle per point, coloured by cluster label (-1 drawn grey)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    px = _scale(x, MARGIN + 6, WIDTH - MARGIN / 2 - 6) if x.size else x
    py = _scale(y, HEIGHT - MARGIN - 6, MARGIN / 2 + 16) if y.size else y
    out = _frame(title, xlabel, ylabel)
    classes = sorted(set(int(v) for v in labels))
    for lab in classes:
        out.append(f'<g class="cluster" data-label="{lab}" fill="{color_for(lab)}" fill-opacity="0.7">')
        for i in np.flatnonzero(np.asarray(labels) == lab):
            out.append(f'<circle cx="{px[i]:.2f}" cy="{py[i]:.2f}" r="2"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def line_svg(categories: Sequence[str], series: Mapping[str, Sequence[float]], title: str = "",
             ylabel: str = "") -> str:
    """Polyline per series over shared categorical x positions, y fixed to [0, 1]."""
    n = len(categories)
    x0, x1 = MARGIN + 10, WIDTH - MARGIN / 2 - 10
    xs = [x0 + (x1 - x0) * (i / (n - 1) if n > 1 else 0.5) for i in range(n)]
    y_lo, y_hi = HEIGHT - MARGIN - 4, MARGIN / 2 + 16

    def py(v: float) -> float:
        return y_lo + min(max(v, 0.0), 1.0) * (y_hi - y_lo)

    out = _frame(title, "subset", ylabel)
    for i, cat in enumerate(categories):
        out.append(f'<text x="{xs[i]:.2f}" y="{HEIGHT - MARGIN + 14}" text-anchor="middle" '
                   f'font-size="8">{escape(cat)}</text>')
    for k, (name, values) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{xs[i]:.2f},{py(v):.2f}" for i, v in enumerate(values) if np.isfinite(v))
        out.append(f'<polyline class="series" data-name="{escape(name)}" fill="none" '
                   f'stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{WIDTH - MARGIN / 2 - 4}" y="{MARGIN / 2 + 16 + 14 * k}" '
                   f'text-anchor="end" font-size="11" fill="{color}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
