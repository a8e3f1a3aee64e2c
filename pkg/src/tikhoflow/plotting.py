"""Dependency-free SVG line plots of CSV columns.

Output is a pure function of the input data, so identical runs give
byte-identical files.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from ._io import atomic_write_text, read_csv
from .errors import EmptyData, MissingColumn

__all__ = ["plot", "render_svg"]

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 150, 30, 50
COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"]


def _num(v):
    # short, platform-independent coordinates
    return f"{v:.2f}"


def _ticks(lo, hi, log):
    if log:
        return [float(k) for k in range(math.ceil(lo), math.floor(hi) + 1)]
    step = 10 ** math.floor(math.log10(max(hi - lo, 1e-300)))
    start = math.ceil(lo / step) * step
    return list(np.arange(start, hi + step * 0.5, step))


def _label(v, log):
    return f"1e{int(v)}" if log else f"{v:.3g}"


def render_svg(x, series: dict, loglog: bool = True, ref_slopes=(), title: str = "",
               xlabel: str = "t") -> str:
    """SVG text for ``series`` (name -> y array) against ``x``.

    Reference power laws ``t^e`` are dashed and pass through the first point
    of the first series.
    """
    x = np.asarray(x, dtype=float)
    curves = []
    for name, y in series.items():
        y = np.asarray(y, dtype=float)
        ok = np.isfinite(x) & np.isfinite(y)
        if loglog:
            ok &= (x > 0) & (y > 0)
        if ok.sum() < 2:
            raise EmptyData(f"column {name!r} has fewer than 2 plottable points")
        xs, ys = x[ok], y[ok]
        if loglog:
            xs, ys = np.log10(xs), np.log10(ys)
        curves.append((name, xs, ys))

    refs = []
    name0, x0s, y0s = curves[0]
    for e in ref_slopes:
        refs.append((e, x0s[[0, -1]], y0s[0] + e * (x0s[[0, -1]] - x0s[0])))

    all_x = np.concatenate([c[1] for c in curves])
    all_y = np.concatenate([c[2] for c in curves] + [r[2] for r in refs])
    xlo, xhi = float(all_x.min()), float(all_x.max())
    ylo, yhi = float(all_y.min()), float(all_y.max())
    if xhi == xlo:
        xhi = xlo + 1
    if yhi == ylo:
        ylo, yhi = ylo - 0.5, yhi + 0.5
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(v):
        return LEFT + (v - xlo) / (xhi - xlo) * pw

    def py(v):
        return TOP + (yhi - v) / (yhi - ylo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    if title:
        out.append(f'<text x="{LEFT}" y="{TOP - 10}">{_esc(title)}</text>')
    for v in _ticks(xlo, xhi, loglog):
        X = _num(px(v))
        out.append(f'<line x1="{X}" y1="{TOP + ph}" x2="{X}" y2="{TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{X}" y="{TOP + ph + 18}" text-anchor="middle">{_label(v, loglog)}</text>')
    for v in _ticks(ylo, yhi, loglog):
        Y = _num(py(v))
        out.append(f'<line x1="{LEFT - 5}" y1="{Y}" x2="{LEFT}" y2="{Y}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{Y}" text-anchor="end" dominant-baseline="middle">'
                   f'{_label(v, loglog)}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle">'
               f'{_esc(xlabel)}</text>')
    for i, (name, xs, ys) in enumerate(curves):
        color = COLORS[i % len(COLORS)]
        pts = " ".join(f"{_num(px(a))},{_num(py(b))}" for a, b in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = TOP + 14 + 16 * i
        out.append(f'<line x1="{LEFT + pw + 10}" y1="{ly}" x2="{LEFT + pw + 30}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="1.5"/>')
        out.append(f'<text x="{LEFT + pw + 35}" y="{ly + 4}">{_esc(name)}</text>')
    for j, (e, xs, ys) in enumerate(refs):
        out.append(f'<line x1="{_num(px(xs[0]))}" y1="{_num(py(ys[0]))}" x2="{_num(px(xs[1]))}" '
                   f'y2="{_num(py(ys[1]))}" stroke="gray" stroke-dasharray="6,4"/>')
        out.append(f'<text x="{_num(px(xs[1]) + 4)}" y="{_num(py(ys[1]))}" fill="gray">'
                   f't^{e:.4g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s):
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def plot(csv_path, y, x: str = "t", loglog: bool = True, ref_slopes=(), out=None,
         title: str = "") -> Path:
    """Plot columns ``y`` of ``csv_path`` against ``x`` and write an SVG.

    Raises
    ------
    MissingColumn
        If a requested column is absent.
    EmptyData
        If a column has fewer than two plottable points.
    """
    header, cols = read_csv(csv_path)
    ys = [y] if isinstance(y, str) else list(y)
    for name in [x, *ys]:
        if name not in header:
            raise MissingColumn(f"column {name!r} not in {Path(csv_path).name}; "
                                f"available: {', '.join(header)}")
    if len(cols[x]) < 2:
        raise EmptyData(f"{Path(csv_path).name} has {len(cols[x])} rows, need at least 2")
    try:
        series = {name: np.array(cols[name], dtype=float) for name in ys}
        xv = np.array(cols[x], dtype=float)
    except ValueError as exc:
        raise EmptyData(f"non-numeric data: {exc}") from None
    svg = render_svg(xv, series, loglog=loglog, ref_slopes=ref_slopes, title=title, xlabel=x)
    out = Path(csv_path).with_suffix(".svg") if out is None else Path(out)
    return atomic_write_text(out, svg)
