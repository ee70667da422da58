"""Minimal hand-written SVG charts: line plots with point markers and strip plots."""

from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import escape

__all__ = ["line_chart", "strip_chart"]

WIDTH, HEIGHT = 640, 400
MARGIN = 56
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _span(values: Sequence[float]) -> tuple[float, float]:
    lo, hi = min(values), max(values)
    if hi == lo:
        pad = abs(lo) * 0.1 or 1.0
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


class _Frame:
    def __init__(self, xlim, ylim):
        self.xlim, self.ylim = xlim, ylim

    def x(self, v: float) -> float:
        lo, hi = self.xlim
        return MARGIN + (v - lo) / (hi - lo) * (WIDTH - 2 * MARGIN)

    def y(self, v: float) -> float:
        lo, hi = self.ylim
        return HEIGHT - MARGIN - (v - lo) / (hi - lo) * (HEIGHT - 2 * MARGIN)


def _axes(f: _Frame, title: str, xlabel: str, ylabel: str) -> list[str]:
    x0, x1 = MARGIN, WIDTH - MARGIN
    y0, y1 = HEIGHT - MARGIN, MARGIN
    out = [
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<g class="axes" stroke="black" stroke-width="1">'
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/>'
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/></g>',
        f'<text x="{WIDTH / 2}" y="{MARGIN / 2}" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="14" y="{HEIGHT / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {HEIGHT / 2})">{escape(ylabel)}</text>',
    ]
    for k in range(5):
        xv = f.xlim[0] + k * (f.xlim[1] - f.xlim[0]) / 4
        yv = f.ylim[0] + k * (f.ylim[1] - f.ylim[0]) / 4
        out.append(
            f'<text class="tick" x="{_fmt(f.x(xv))}" y="{y0 + 16}" text-anchor="middle" font-size="10">{xv:.3g}</text>'
        )
        out.append(
            f'<text class="tick" x="{x0 - 6}" y="{_fmt(f.y(yv) + 3)}" text-anchor="end" font-size="10">{yv:.3g}</text>'
        )
    return out


def _document(body: list[str]) -> str:
    head = f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">'
    return "\n".join([head, *body, "</svg>"]) + "\n"


def line_chart(
    series: dict[str, tuple[Sequence[float], Sequence[float]]],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    hline: float | None = None,
    hline_label: str = "criterion",
    markers: bool = True,
) -> str:
    """One polyline per named series, optional point markers and a horizontal rule.

    Each marker is a ``<circle class="point">``; the rule is a single
    ``<line class="criterion">``.
    """
    if not series:
        raise ValueError("nothing to plot")
    xs = [v for xv, _ in series.values() for v in xv]
    ys = [v for _, yv in series.values() for v in yv]
    if hline is not None:
        ys.append(hline)
    f = _Frame(_span(xs), _span(ys))
    body = _axes(f, title, xlabel, ylabel)
    for k, (name, (xv, yv)) in enumerate(series.items()):
        if len(xv) != len(yv):
            raise ValueError(f"series {name!r}: x and y lengths differ")
        color = COLORS[k % len(COLORS)]
        pts = " ".join(f"{_fmt(f.x(a))},{_fmt(f.y(b))}" for a, b in zip(xv, yv))
        body.append(f'<polyline class="series" fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        if markers:
            body.extend(
                f'<circle class="point" cx="{_fmt(f.x(a))}" cy="{_fmt(f.y(b))}" r="3" fill="{color}"/>'
                for a, b in zip(xv, yv)
            )
        body.append(
            f'<text class="legend" x="{WIDTH - MARGIN - 4}" y="{MARGIN + 14 * (k + 1)}" text-anchor="end" '
            f'font-size="11" fill="{color}">{escape(name)}</text>'
        )
    if hline is not None:
        yy = _fmt(f.y(hline))
        body.append(
            f'<line class="criterion" x1="{MARGIN}" y1="{yy}" x2="{WIDTH - MARGIN}" y2="{yy}" '
            f'stroke="gray" stroke-dasharray="6 4"/>'
        )
        body.append(f'<text x="{MARGIN + 4}" y="{float(yy) - 4:.2f}" font-size="10" fill="gray">{escape(hline_label)}</text>')
    return _document(body)


def strip_chart(groups: dict[str, Sequence[float]], title: str = "", xlabel: str = "value") -> str:
    """Horizontal strip plot, one row per group, points jittered deterministically."""
    if not groups or not any(len(v) for v in groups.values()):
        raise ValueError("nothing to plot")
    vals = [v for g in groups.values() for v in g] + [0.0]
    f = _Frame(_span(vals), (0.0, float(len(groups))))
    body = _axes(f, title, xlabel, "")
    zero = _fmt(f.x(0.0))
    body.append(f'<line class="zero" x1="{zero}" y1="{MARGIN}" x2="{zero}" y2="{HEIGHT - MARGIN}" stroke="#bbb"/>')
    for k, (name, g) in enumerate(groups.items()):
        color = COLORS[k % len(COLORS)]
        centre = len(groups) - k - 0.5
        for i, v in enumerate(g):
            jitter = ((i * 0.618034) % 1.0 - 0.5) * 0.5
            body.append(
                f'<circle class="point" cx="{_fmt(f.x(v))}" cy="{_fmt(f.y(centre + jitter))}" r="3" '
                f'fill="{color}" fill-opacity="0.7"/>'
            )
        body.append(
            f'<text x="{MARGIN + 4}" y="{_fmt(f.y(centre + 0.4))}" font-size="11" fill="{color}">{escape(name)}</text>'
        )
    return _document(body)
