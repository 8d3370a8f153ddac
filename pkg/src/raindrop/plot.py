"""Standalone SVG rendering of a profile curve.

Coordinates are written in user units centred on ``x = 0`` with a fixed
number of decimals, so mirror-symmetric curves give mirror-symmetric path
data and identical inputs give identical bytes.
"""

from __future__ import annotations

import numpy as np

from .ode import DomainError
from .serialize import TraceTable

WIDTH = 600.0
MARGIN = 20.0


def _fmt(v: float) -> str:
    out = "%.3f" % v
    return "0.000" if out == "-0.000" else out


def _path(xs, ys) -> str:
    parts = [f"M{_fmt(xs[0])},{_fmt(ys[0])}"]
    parts += [f"L{_fmt(x)},{_fmt(y)}" for x, y in zip(xs[1:], ys[1:])]
    return " ".join(parts)


def render_svg(table: TraceTable, inset: bool = True, max_points: int = 2001) -> str:
    """SVG text for the curve in ``table`` with equal axis scales."""
    if len(table) < 2:
        raise DomainError("trace has fewer than two samples")
    x = np.asarray(table.columns["x"], dtype=float)
    y = np.asarray(table.columns["y"], dtype=float)
    stride = max(1, int(np.ceil((len(x) - 1) / (max_points - 1))))
    # keep the centre sample and stride symmetrically around it
    mid = len(x) // 2
    idx = np.unique(np.concatenate([np.arange(mid, -1, -stride), np.arange(mid, len(x), stride)]))
    x, y = x[idx], y[idx]

    half_w = max(float(np.max(np.abs(x))), 1e-12)
    y_lo, y_hi = float(np.min(y)), float(np.max(y))
    scale = (WIDTH / 2.0 - MARGIN) / half_w
    height = (y_hi - y_lo) * scale + 2.0 * MARGIN
    px = x * scale
    py = (y_hi - y) * scale + MARGIN  # SVG y grows downwards

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{_fmt(-WIDTH / 2)} 0 '
        f'{_fmt(WIDTH)} {_fmt(height)}" width="{_fmt(WIDTH)}" height="{_fmt(height)}">',
        f'<rect x="{_fmt(-WIDTH / 2)}" y="0" width="{_fmt(WIDTH)}" height="{_fmt(height)}" '
        'fill="white"/>',
        f'<line x1="0.000" y1="0.000" x2="0.000" y2="{_fmt(height)}" stroke="#bbbbbb" '
        'stroke-width="0.5"/>',
        f'<path id="curve" d="{_path(px, py)}" fill="none" stroke="black" stroke-width="1.5"/>',
    ]
    if inset:
        s = np.asarray(table.columns["s"], dtype=float)[idx]
        k = np.asarray(table.columns["kappa"], dtype=float)[idx]
        w, h = WIDTH / 4.0, min(height / 4.0, 120.0)
        x0, y0 = WIDTH / 2.0 - MARGIN - w, MARGIN
        k_lo, k_hi = float(np.min(k)), float(np.max(k))
        k_span = (k_hi - k_lo) or 1.0
        s_span = (float(s[-1] - s[0])) or 1.0
        ix = x0 + (s - s[0]) / s_span * w
        iy = y0 + (k_hi - k) / k_span * h
        lines += [
            f'<g id="kappa-inset"><rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(w)}" '
            f'height="{_fmt(h)}" fill="none" stroke="#888888" stroke-width="0.5"/>',
            f'<path d="{_path(ix, iy)}" fill="none" stroke="#1f5fa8" stroke-width="1"/>',
            f'<text x="{_fmt(x0 + 4)}" y="{_fmt(y0 + 12)}" font-size="10" '
            'font-family="sans-serif">curvature vs arc length</text></g>',
        ]
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
