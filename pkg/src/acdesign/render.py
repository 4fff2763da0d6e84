"""Deterministic SVG rendering for assignment-control plots and diagnostics.

Coordinates are rounded to three decimals and elements are emitted in a
fixed order, so equal inputs give byte-identical documents. Axes and ticks
are drawn as ``<path>`` elements; ``<line>`` is reserved for match segments
and the Love-plot zero reference so element counts stay meaningful.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from html import escape

import numpy as np

from .data import RngSpec
from .diagnose import AcPlotData, OverlapHistogram, SmdTable
from .errors import DataError, MismatchedUnits

_HEX = re.compile(r"^#(?:[0-9a-fA-F]{3}|[0-9a-fA-F]{6})$")


@dataclass(frozen=True)
class PlotStyle:
    width: int = 480
    height: int = 400
    treated_color: str = "#d62728"
    control_color: str = "#1f77b4"
    segment_color: str = "#555555"
    adjusted_color: str = "#000000"
    point_radius: float = 2.5
    segment_dash: str = "2,3"
    margin: int = 56
    font_size: int = 11
    ticks: int = 5
    x_label: str | None = None
    y_label: str | None = None
    title: str | None = None
    panel_gap: int = 24

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("plot dimensions must be positive")
        if self.point_radius <= 0:
            raise ValueError("point_radius must be positive")
        if 2 * self.margin >= min(self.width, self.height):
            raise ValueError("margin leaves no room for the plot area")
        for name in ("treated_color", "control_color", "segment_color", "adjusted_color"):
            if not _HEX.match(getattr(self, name)):
                raise ValueError(f"{name} must be a hex color, got {getattr(self, name)!r}")


def _f(v: float) -> str:
    s = f"{round(float(v), 3):.3f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _nice_step(span: float, target: int) -> float:
    raw = span / max(target, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for m in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= m * mag + 1e-12:
            return m * mag
    return 10.0 * mag


def _ticks(lo: float, hi: float, target: int) -> list[float]:
    step = _nice_step(hi - lo, target)
    start = math.ceil(lo / step - 1e-9)
    out = []
    k = start
    while k * step <= hi + 1e-9 * step:
        out.append(round(k * step, 12))
        k += 1
    return out


def _tick_label(v: float) -> str:
    s = f"{v:.6g}"
    return "0" if s == "-0" else s


def _range(values: np.ndarray, pad: float = 0.05) -> tuple[float, float]:
    if values.size == 0:
        return 0.0, 1.0
    lo, hi = float(values.min()), float(values.max())
    if hi - lo < 1e-12:
        return lo - 0.5, hi + 0.5
    d = (hi - lo) * pad
    return lo - d, hi + d


class _Frame:
    """Maps data coordinates into one panel's pixel box."""

    def __init__(self, x0, y0, w, h, xlim, ylim):
        self.x0, self.y0, self.w, self.h = x0, y0, w, h
        self.xlim, self.ylim = xlim, ylim

    def px(self, x):
        lo, hi = self.xlim
        return self.x0 + (np.asarray(x, dtype=float) - lo) / (hi - lo) * self.w

    def py(self, y):
        lo, hi = self.ylim
        return self.y0 + self.h - (np.asarray(y, dtype=float) - lo) / (hi - lo) * self.h


def _axes(out: list, fr: _Frame, style: PlotStyle, xlabel, ylabel, yticks=True):
    x0, y0, w, h = fr.x0, fr.y0, fr.w, fr.h
    d = [f"M{_f(x0)},{_f(y0)}V{_f(y0 + h)}H{_f(x0 + w)}"]
    fs = style.font_size
    labels = []
    for v in _ticks(*fr.xlim, style.ticks):
        px = float(fr.px(v))
        d.append(f"M{_f(px)},{_f(y0 + h)}v4")
        labels.append(
            f'<text x="{_f(px)}" y="{_f(y0 + h + 6 + fs)}" text-anchor="middle">{_tick_label(v)}</text>'
        )
    if yticks:
        for v in _ticks(*fr.ylim, style.ticks):
            py = float(fr.py(v))
            d.append(f"M{_f(x0)},{_f(py)}h-4")
            labels.append(
                f'<text x="{_f(x0 - 6)}" y="{_f(py + fs / 3)}" text-anchor="end">{_tick_label(v)}</text>'
            )
    out.append(f'<path d="{"".join(d)}" fill="none" stroke="#000000" stroke-width="1"/>')
    out.extend(labels)
    if xlabel:
        out.append(
            f'<text x="{_f(x0 + w / 2)}" y="{_f(y0 + h + 2 * fs + 14)}" text-anchor="middle">{escape(xlabel)}</text>'
        )
    if ylabel:
        cx, cy = x0 - 2 * fs - 20, y0 + h / 2
        out.append(
            f'<text x="{_f(cx)}" y="{_f(cy)}" text-anchor="middle" '
            f'transform="rotate(-90 {_f(cx)} {_f(cy)})">{escape(ylabel)}</text>'
        )


def _document(width, height, body, style: PlotStyle) -> str:
    head = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="{style.font_size}">\n'
    )
    return head + "\n".join(body) + "\n</svg>\n"


def _title(out, text, x, y):
    if text:
        out.append(f'<text x="{_f(x)}" y="{_f(y)}" text-anchor="middle" font-weight="bold">{escape(text)}</text>')


def _ac_panel(out, data: AcPlotData, fr: _Frame, style: PlotStyle, pairs=None):
    _axes(out, fr, style, style.x_label or data.x_label, style.y_label or data.y_label)
    pairs = data.pairs if pairs is None else pairs
    if len(pairs):
        xa, ya = fr.px(data.x[pairs[:, 0]]), fr.py(data.y[pairs[:, 0]])
        xb, yb = fr.px(data.x[pairs[:, 1]]), fr.py(data.y[pairs[:, 1]])
        for k in range(len(pairs)):
            out.append(
                f'<line x1="{_f(xa[k])}" y1="{_f(ya[k])}" x2="{_f(xb[k])}" y2="{_f(yb[k])}" '
                f'stroke="{style.segment_color}" stroke-width="1" stroke-dasharray="{style.segment_dash}"/>'
            )
    px, py = fr.px(data.x), fr.py(data.y)
    r = _f(style.point_radius)
    for k in range(data.n_points):
        color = style.treated_color if data.t[k] == 1 else style.control_color
        out.append(f'<circle cx="{_f(px[k])}" cy="{_f(py[k])}" r="{r}" fill="{color}" fill-opacity="0.7"/>')


def _legend(out, style: PlotStyle, x, y):
    out.append(f'<text x="{_f(x)}" y="{_f(y)}" text-anchor="end" fill="{style.treated_color}">treated</text>')
    out.append(
        f'<text x="{_f(x)}" y="{_f(y + style.font_size + 2)}" text-anchor="end" '
        f'fill="{style.control_color}">control</text>'
    )


def render_ac_plot(data: AcPlotData, style: PlotStyle | None = None, allow_empty: bool = False) -> str:
    """One circle per unit (colored by T) and one dashed line per matched pair."""
    style = style or PlotStyle()
    if data.n_points == 0 and not allow_empty:
        raise DataError("no points to plot; pass allow_empty=True for an axes-only figure")
    m = style.margin
    fr = _Frame(m, m / 2, style.width - 1.5 * m, style.height - 1.5 * m, _range(data.x), _range(data.y))
    out: list[str] = []
    _title(out, style.title, style.width / 2, m / 2 - 8)
    _ac_panel(out, data, fr, style)
    _legend(out, style, fr.x0 + fr.w - 4, fr.y0 + style.font_size + 2)
    return _document(style.width, style.height, out, style)


def _same_units(panels) -> bool:
    a = panels[0]
    for b in panels[1:]:
        if a.n_points != b.n_points or not np.array_equal(a.t, b.t):
            return False
        if (a.units is None) != (b.units is None):
            return False
        if a.units is not None and not np.array_equal(a.units, b.units):
            return False
        if not np.array_equal(a.pairs, b.pairs):
            return False
    return True


def subsample_pairs(n_pairs: int, count: int | None, rng: RngSpec | None = None) -> np.ndarray:
    """Sorted pair ids to draw: all when ``count`` is None or >= ``n_pairs``."""
    if count is None or count >= n_pairs:
        return np.arange(n_pairs)
    if count < 0:
        raise ValueError("subsample size must be >= 0")
    g = (rng or RngSpec()).derive("subsample-pairs").generator()
    return np.sort(g.choice(n_pairs, size=count, replace=False))


def render_rac_triptych(
    panels,
    style: PlotStyle | None = None,
    subsample: int | None = None,
    rng: RngSpec | None = None,
) -> str:
    """Three projections of the same units side by side.

    With ``subsample`` only that many matched pairs (the same pair ids in
    every panel) are drawn; every point is always drawn.
    """
    panels = list(panels)
    if len(panels) != 3:
        raise MismatchedUnits(f"a triptych needs three projections, got {len(panels)}")
    if not _same_units(panels):
        raise MismatchedUnits("projections do not describe the same units and pairs")
    style = style or PlotStyle()
    keep = subsample_pairs(panels[0].n_segments, subsample, rng)
    m = style.margin
    w = style.width
    total_w = 3 * w + 2 * style.panel_gap
    out: list[str] = []
    _title(out, style.title, total_w / 2, m / 2 - 8)
    panel_style = replace(style, x_label=None, y_label=None)
    for k, data in enumerate(panels):
        x0 = k * (w + style.panel_gap)
        fr = _Frame(x0 + m, m / 2, w - 1.5 * m, style.height - 1.5 * m, _range(data.x), _range(data.y))
        out.append(f'<g id="panel-{k}">')
        _ac_panel(out, data, fr, panel_style, data.pairs[keep])
        out.append("</g>")
    _legend(out, style, total_w - 0.5 * m - 4, m / 2 + style.font_size + 2)
    return _document(total_w, style.height, out, style)


def render_love_plot(table: SmdTable, style: PlotStyle | None = None) -> str:
    """Squares for unadjusted SMDs, circles for adjusted, zero reference line."""
    style = style or PlotStyle()
    k = len(table.rows)
    vals = list(table.unadjusted)
    adj = table.adjusted
    if adj is not None:
        vals += list(adj)
    bound = max([abs(v) for v in vals] + [0.1]) * 1.1
    m = style.margin
    left = m + 60
    row_h = max(14.0, (style.height - 1.5 * m) / max(k, 1))
    height = max(style.height, int(math.ceil(m * 1.5 + row_h * k)))
    fr = _Frame(left, m / 2, style.width - left - m / 2, height - 1.5 * m, (-bound, bound), (0.0, max(k, 1)))
    out: list[str] = []
    _title(out, style.title, style.width / 2, m / 2 - 8)
    _axes(out, fr, style, style.x_label or "standardized mean difference", None, yticks=False)
    zx = _f(fr.px(0.0))
    out.append(
        f'<line x1="{zx}" y1="{_f(fr.y0)}" x2="{zx}" y2="{_f(fr.y0 + fr.h)}" stroke="#000000" stroke-width="1"/>'
    )
    half = 3.5
    for i, row in enumerate(table.rows):
        cy = float(fr.py(k - i - 0.5))
        out.append(
            f'<text x="{_f(left - 8)}" y="{_f(cy + style.font_size / 3)}" text-anchor="end">{escape(row.name)}</text>'
        )
        cx = float(fr.px(row.smd_unadjusted))
        out.append(
            f'<rect x="{_f(cx - half)}" y="{_f(cy - half)}" width="{_f(2 * half)}" height="{_f(2 * half)}" '
            f'fill="#000000"/>'
        )
        if row.smd_adjusted is not None:
            out.append(
                f'<circle cx="{_f(fr.px(row.smd_adjusted))}" cy="{_f(cy)}" r="{_f(half)}" '
                f'fill="none" stroke="{style.adjusted_color}" stroke-width="1.5"/>'
            )
    return _document(style.width, height, out, style)


def render_overlap(hist: OverlapHistogram, style: PlotStyle | None = None) -> str:
    """Overlaid per-group density bars of the propensity score."""
    style = style or PlotStyle()
    top = float(max(hist.density_treated.max(initial=0.0), hist.density_control.max(initial=0.0)))
    top = top * 1.05 if top > 0 else 1.0
    m = style.margin
    xlim = (float(hist.edges[0]), float(hist.edges[-1]))
    fr = _Frame(m, m / 2, style.width - 1.5 * m, style.height - 1.5 * m, xlim, (0.0, top))
    out: list[str] = []
    _title(out, style.title, style.width / 2, m / 2 - 8)
    _axes(out, fr, style, style.x_label or "propensity score", style.y_label or "density")
    base = fr.y0 + fr.h
    for dens, color in ((hist.density_control, style.control_color), (hist.density_treated, style.treated_color)):
        for j, d in enumerate(dens):
            if d <= 0:
                continue
            x0, x1 = float(fr.px(hist.edges[j])), float(fr.px(hist.edges[j + 1]))
            y = float(fr.py(d))
            out.append(
                f'<rect x="{_f(x0)}" y="{_f(y)}" width="{_f(x1 - x0)}" height="{_f(base - y)}" '
                f'fill="{color}" fill-opacity="0.45"/>'
            )
    out.append(
        f'<text x="{_f(fr.x0 + fr.w - 4)}" y="{_f(fr.y0 + 3 * style.font_size + 6)}" text-anchor="end">'
        f"overlap {hist.overlap:.3f}</text>"
    )
    _legend(out, style, fr.x0 + fr.w - 4, fr.y0 + style.font_size + 2)
    return _document(style.width, style.height, out, style)


def write_svg(path, document: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(document)
