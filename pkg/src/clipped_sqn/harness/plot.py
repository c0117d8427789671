"""Static SVG line plots of loss against cumulative samples.

The output depends only on the input numbers, so identical traces give
byte-identical documents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence
from xml.sax.saxutils import escape

PALETTE = ("#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


@dataclass(frozen=True)
class PlotSeries:
    label: str
    xs: Sequence[float]
    ys: Sequence[float]


@dataclass(frozen=True)
class AxesSpec:
    title: str = ""
    x_label: str = "samples"
    y_label: str = "training loss"
    log_y: bool = True
    width: int = 720
    height: int = 460


_MARGIN = dict(left=80, right=190, top=40, bottom=55)


def _f(v: float) -> str:
    return f"{v:.2f}"


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _log_ticks(lo: float, hi: float) -> list[float]:
    """Decade ticks, or a few linear-in-log ticks when the range is under one decade."""
    a, b = math.floor(lo), math.ceil(hi)
    if b - a >= 2:
        return [10.0**e for e in range(a, b + 1) if lo - 1e-12 <= e <= hi + 1e-12]
    return [10.0**t for t in (lo + (hi - lo) * i / 4 for i in range(5))]


def emit_plot(series: Sequence[PlotSeries], axes: AxesSpec = AxesSpec()) -> str:
    """Render one polyline per series with a legend in input order."""
    if not series:
        raise ValueError("emit_plot needs at least one trace")
    for s in series:
        if len(s.xs) != len(s.ys):
            raise ValueError(f"trace {s.label!r}: x and y lengths differ")
        if len(s.xs) == 0:
            raise ValueError(f"trace {s.label!r} is empty")
        if not all(math.isfinite(v) for v in list(s.xs) + list(s.ys)):
            raise ValueError(f"trace {s.label!r} has non-finite values")
        if axes.log_y and min(s.ys) <= 0:
            raise ValueError(f"trace {s.label!r} has nonpositive values on a log axis")

    ty = (lambda v: math.log10(v)) if axes.log_y else (lambda v: v)
    xs_all = [x for s in series for x in s.xs]
    ys_all = [ty(y) for s in series for y in s.ys]
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad = 0.04 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    W, H = axes.width, axes.height
    m = _MARGIN
    pw, ph = W - m["left"] - m["right"], H - m["top"] - m["bottom"]

    def px(x):
        return m["left"] + (x - x_lo) / (x_hi - x_lo) * pw

    def py(yt):
        return m["top"] + (1.0 - (yt - y_lo) / (y_hi - y_lo)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
    ]
    if axes.title:
        out.append(f'<text x="{_f(m["left"] + pw / 2)}" y="22" text-anchor="middle" font-size="15">{escape(axes.title)}</text>')
    out.append(
        f'<rect x="{m["left"]}" y="{m["top"]}" width="{pw}" height="{ph}" fill="none" stroke="black" stroke-width="1"/>'
    )

    for t in _nice_ticks(x_lo, x_hi):
        x = px(t)
        out.append(f'<line x1="{_f(x)}" y1="{_f(m["top"] + ph)}" x2="{_f(x)}" y2="{_f(m["top"] + ph + 5)}" stroke="black"/>')
        out.append(f'<text x="{_f(x)}" y="{_f(m["top"] + ph + 19)}" text-anchor="middle" font-size="11">{t:g}</text>')
    y_ticks = _log_ticks(y_lo, y_hi) if axes.log_y else _nice_ticks(y_lo, y_hi)
    for t in y_ticks:
        y = py(ty(t))
        out.append(f'<line x1="{_f(m["left"] - 5)}" y1="{_f(y)}" x2="{m["left"]}" y2="{_f(y)}" stroke="black"/>')
        out.append(
            f'<line x1="{m["left"]}" y1="{_f(y)}" x2="{m["left"] + pw}" y2="{_f(y)}" stroke="#dddddd" stroke-width="0.5"/>'
        )
        out.append(f'<text x="{_f(m["left"] - 8)}" y="{_f(y + 4)}" text-anchor="end" font-size="11">{t:.4g}</text>')

    out.append(
        f'<text x="{_f(m["left"] + pw / 2)}" y="{H - 12}" text-anchor="middle" font-size="13">{escape(axes.x_label)}</text>'
    )
    y_label = axes.y_label + (" (log scale)" if axes.log_y else "")
    cy = m["top"] + ph / 2
    out.append(
        f'<text x="18" y="{_f(cy)}" text-anchor="middle" font-size="13" transform="rotate(-90 18 {_f(cy)})">{escape(y_label)}</text>'
    )

    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{_f(px(x))},{_f(py(ty(y)))}" for x, y in zip(s.xs, s.ys))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.6" points="{pts}"/>')

    lx = m["left"] + pw + 15
    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        ly = m["top"] + 12 + 20 * i
        out.append('<g class="legend-entry">')
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 24}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 30}" y="{ly + 4}" font-size="12">{escape(s.label)}</text>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
