"""Hand-written SVG figures with a fixed canvas and axis policy.

Both figures are 800x600 with 60px margins. All coordinates are written
with six decimals, so output is byte-stable for identical input data.
"""

from __future__ import annotations

import math
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import InsufficientData

WIDTH = 800
HEIGHT = 600
MARGIN = 60
CURVE_POINTS = 512
MIN_POINTS = 100

COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"]
LOG_BLUE = "#1f3fbf"
MAJORIZER_GREEN = "#2ca02c"


def _f(v: float) -> str:
    return f"{v:.6f}"


def _escape(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
            .replace('"', "&quot;"))


class _Axes:
    def __init__(self, x_lo: float, x_hi: float, y_lo: float, y_hi: float):
        self.x_lo, self.x_hi, self.y_lo, self.y_hi = x_lo, x_hi, y_lo, y_hi
        self.left, self.right = MARGIN, WIDTH - MARGIN
        self.top, self.bottom = MARGIN, HEIGHT - MARGIN

    def px(self, x):
        return self.left + (np.asarray(x) - self.x_lo) / (self.x_hi - self.x_lo) * (self.right - self.left)

    def py(self, y):
        return self.bottom - (np.asarray(y) - self.y_lo) / (self.y_hi - self.y_lo) * (self.bottom - self.top)

    def contains(self, x, y):
        x = np.asarray(x)
        y = np.asarray(y)
        return (x >= self.x_lo) & (x <= self.x_hi) & (y >= self.y_lo) & (y <= self.y_hi)


def _nice_ticks(lo: float, hi: float, n: int = 6) -> List[float]:
    span = hi - lo
    if span <= 0:
        return [lo]
    raw = span / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-12 * span:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _frame(ax: _Axes, title: str, x_label: str, y_label: str) -> List[str]:
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
        f'<text x="{WIDTH / 2:.1f}" y="32" text-anchor="middle" font-size="16" '
        f'font-family="sans-serif">{_escape(title)}</text>',
        f'<rect class="plot-area" x="{ax.left}" y="{ax.top}" width="{ax.right - ax.left}" '
        f'height="{ax.bottom - ax.top}" fill="none" stroke="#333333" stroke-width="1"/>',
    ]
    out.append('<g class="ticks" font-size="11" font-family="sans-serif" fill="#333333">')
    for t in _nice_ticks(ax.x_lo, ax.x_hi):
        x = float(ax.px(t))
        out.append(f'<line x1="{_f(x)}" y1="{ax.bottom}" x2="{_f(x)}" y2="{ax.bottom + 5}" stroke="#333333"/>')
        out.append(f'<text x="{_f(x)}" y="{ax.bottom + 18}" text-anchor="middle">{t:g}</text>')
    for t in _nice_ticks(ax.y_lo, ax.y_hi):
        y = float(ax.py(t))
        out.append(f'<line x1="{ax.left - 5}" y1="{_f(y)}" x2="{ax.left}" y2="{_f(y)}" stroke="#333333"/>')
        out.append(f'<text x="{ax.left - 8}" y="{_f(y + 4)}" text-anchor="end">{t:g}</text>')
    out.append("</g>")
    out.append(f'<text x="{WIDTH / 2:.1f}" y="{HEIGHT - 18}" text-anchor="middle" font-size="13" '
               f'font-family="sans-serif">{_escape(x_label)}</text>')
    out.append(f'<text x="18" y="{HEIGHT / 2:.1f}" text-anchor="middle" font-size="13" font-family="sans-serif" '
               f'transform="rotate(-90 18 {HEIGHT / 2:.1f})">{_escape(y_label)}</text>')
    return out


def _polyline(ax: _Axes, xs: np.ndarray, ys: np.ndarray, cls: str, color: str, width: float = 2.0,
              dash: Optional[str] = None) -> str:
    pts = " ".join(f"{_f(a)},{_f(b)}" for a, b in zip(ax.px(xs), ax.py(ys)))
    dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
    return (f'<polyline class="{cls}" points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="{width}"{dash_attr}/>')


def _log_curve(ax: _Axes) -> str:
    x_start = max(math.exp(ax.y_lo), ax.x_lo)
    x_end = min(math.exp(ax.y_hi), ax.x_hi)
    xs = np.linspace(x_start, x_end, CURVE_POINTS)
    return _polyline(ax, xs, np.log(xs), "log-curve", LOG_BLUE)


def iqr(values: np.ndarray) -> float:
    q1, q3 = np.quantile(np.asarray(values, dtype=np.float64), [0.25, 0.75])
    return float(q3 - q1)


def iqr_shrinkage(data: Mapping[int, Tuple[np.ndarray, np.ndarray]], k_small: int, k_large: int) -> float:
    """Ratio of X-scale interquartile ranges, ``IQR(X_small) / IQR(X_large)``."""
    return iqr(data[k_small][0]) / iqr(data[k_large][0])


def concentration_svg(data: Mapping[int, Tuple[np.ndarray, np.ndarray]], title: Optional[str] = None) -> str:
    """Scatter of ``(X_K, Y_K)`` clouds for several ``K`` over the log curve.

    Parameters
    ----------
    data : mapping
        ``k -> (x, y)`` with ``x`` the (normalised) averages and ``y`` their logs.

    The x-range is ``[0, max_k quantile_0.999(X_K)]``; the y-range spans
    the 0.001 quantile of ``Y`` up to the log of the x-range end. Each
    series gets a dotted vertical line at its mean ``X`` and a dotted
    horizontal line at its mean ``Y``.

    Raises
    ------
    InsufficientData
        Fewer than two distinct ``k``, or a series with under 100 points.
    """
    ks = sorted(data)
    if len(ks) < 2:
        raise InsufficientData(f"need at least 2 distinct k values, got {len(ks)}")
    series = {}
    for k in ks:
        x = np.asarray(data[k][0], dtype=np.float64).ravel()
        y = np.asarray(data[k][1], dtype=np.float64).ravel()
        if x.size < MIN_POINTS or x.size != y.size:
            raise InsufficientData(f"series k={k} has {x.size} points, need >= {MIN_POINTS}")
        series[k] = (x, y)

    x_hi = max(float(np.quantile(x, 0.999)) for x, _ in series.values())
    y_lo = min(float(np.quantile(y, 0.001)) for _, y in series.values())
    y_hi = math.log(x_hi)
    if y_hi - y_lo < 1e-9:
        y_lo, y_hi = y_hi - 1.0, y_hi + 0.25
    else:
        y_hi += 0.05 * (y_hi - y_lo)
    ax = _Axes(0.0, x_hi, y_lo, y_hi)

    out = _frame(ax, title or "Concentration of X_K under averaging", "X_K", "Y_K = log X_K")
    out.append(_log_curve(ax))
    for i, k in enumerate(ks):
        x, y = series[k]
        color = COLORS[i % len(COLORS)]
        keep = ax.contains(x, y)
        out.append(f'<g class="series" data-k="{k}" data-n="{x.size}" data-iqr-x="{_f(iqr(x))}" '
                   f'fill="{color}" fill-opacity="0.35">')
        for a, b in zip(ax.px(x[keep]), ax.py(y[keep])):
            out.append(f'<circle cx="{_f(a)}" cy="{_f(b)}" r="1.5"/>')
        out.append("</g>")
        mx, my = float(np.mean(x)), float(np.mean(y))
        if ax.x_lo <= mx <= ax.x_hi:
            px = float(ax.px(mx))
            out.append(f'<line class="mean-x" data-k="{k}" x1="{_f(px)}" y1="{ax.top}" x2="{_f(px)}" '
                       f'y2="{ax.bottom}" stroke="{color}" stroke-width="1.2" stroke-dasharray="3 3"/>')
        if ax.y_lo <= my <= ax.y_hi:
            py = float(ax.py(my))
            out.append(f'<line class="mean-y" data-k="{k}" x1="{ax.left}" y1="{_f(py)}" x2="{ax.right}" '
                       f'y2="{_f(py)}" stroke="{color}" stroke-width="1.2" stroke-dasharray="3 3"/>')
    out.append('<g class="legend" font-size="12" font-family="sans-serif">')
    for i, k in enumerate(ks):
        y = ax.top + 16 + 18 * i
        out.append(f'<circle cx="{ax.right - 90}" cy="{y - 4}" r="4" fill="{COLORS[i % len(COLORS)]}"/>')
        out.append(f'<text x="{ax.right - 80}" y="{y}">K = {k}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def majorizer_svg(mu_x: float, nu_x: float, c_x: float, mu_y: float, title: Optional[str] = None) -> str:
    """The log curve, its tangent at the median ``nu_x`` and the bound's construction points.

    Marks ``nu_x``, ``mu_x``, ``nu_x + c_x`` (where the tangent is read off),
    ``mu_x - c_x`` and the level ``mu_y``.
    """
    if not (nu_x > 0 and mu_x > 0 and c_x >= 0):
        raise InsufficientData("need positive mean and median and non-negative C_X")
    x_hi = 1.25 * max(nu_x + c_x, mu_x, 2.0 * nu_x)
    x_lo = 0.0
    tangent = lambda x: (x - nu_x) / nu_x + math.log(nu_x)  # noqa: E731
    y_hi = tangent(x_hi)
    y_lo = min(mu_y, math.log(max(mu_x - c_x, 0.15 * nu_x))) - 0.5
    ax = _Axes(x_lo, x_hi, y_lo, y_hi + 0.05 * (y_hi - y_lo))

    out = _frame(ax, title or "Linear majorizer of log at the median", "x", "log x")
    out.append(_log_curve(ax))
    t_lo = max(x_lo, nu_x * (1.0 + y_lo - math.log(nu_x)))
    tx = np.linspace(t_lo, x_hi, 2)
    out.append(_polyline(ax, tx, tangent(tx), "majorizer", MAJORIZER_GREEN))

    def vline(x: float, cls: str, label: str) -> None:
        if ax.x_lo <= x <= ax.x_hi:
            px = float(ax.px(x))
            out.append(f'<line class="{cls}" x1="{_f(px)}" y1="{ax.top}" x2="{_f(px)}" y2="{ax.bottom}" '
                       f'stroke="#777777" stroke-width="1" stroke-dasharray="3 3"/>')
            out.append(f'<text class="{cls}-label" x="{_f(px + 3)}" y="{ax.bottom - 6}" font-size="11" '
                       f'font-family="sans-serif">{_escape(label)}</text>')

    def marker(x: float, y: float, cls: str, color: str) -> None:
        out.append(f'<circle class="{cls}" cx="{_f(float(ax.px(x)))}" cy="{_f(float(ax.py(y)))}" r="4" '
                   f'fill="{color}"/>')

    vline(nu_x, "mark-nu-x", "median")
    vline(mu_x, "mark-mu-x", "mean")
    vline(nu_x + c_x, "mark-nu-plus-c", "median + C_X")
    if mu_x - c_x > 0:
        vline(mu_x - c_x, "mark-mu-minus-c", "mean - C_X")
    py = float(ax.py(mu_y))
    out.append(f'<line class="mark-mu-y" x1="{ax.left}" y1="{_f(py)}" x2="{ax.right}" y2="{_f(py)}" '
               f'stroke="#777777" stroke-width="1" stroke-dasharray="3 3"/>')
    out.append(f'<text class="mark-mu-y-label" x="{ax.left + 4}" y="{_f(py - 4)}" font-size="11" '
               f'font-family="sans-serif">E[log X]</text>')
    marker(nu_x, math.log(nu_x), "point-tangent", MAJORIZER_GREEN)
    marker(mu_x, math.log(mu_x), "point-log-mean", LOG_BLUE)
    marker(nu_x + c_x, tangent(nu_x + c_x), "point-majorizer-value", MAJORIZER_GREEN)
    marker(nu_x + c_x, math.log(nu_x + c_x), "point-log-value", LOG_BLUE)
    out.append("</svg>")
    return "\n".join(out) + "\n"
