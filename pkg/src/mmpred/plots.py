"""Minimal standalone SVG writers: bar chart, line plot, critical-difference diagram.

Output is plain text built from fixed-precision numbers, so identical inputs
give byte-identical files.
"""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
FONT = 'font-family="sans-serif" font-size="12"'


def _n(v: float) -> str:
    return f"{float(v):.2f}"


def _svg(width: int, height: int, body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">')
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="white"/>', *body, "</svg>"]) + "\n"


def _text(x, y, s, anchor="middle", extra="") -> str:
    return f'<text x="{_n(x)}" y="{_n(y)}" text-anchor="{anchor}" {FONT}{extra}>{escape(str(s))}</text>'


def bar_chart(labels, values, title: str = "", ylabel: str = "", ymax: float | None = None) -> str:
    """Vertical bars with value labels. One <rect class="bar"> per value."""
    values = np.asarray(values, dtype=float)
    W, H, L, R, T, B = 480, 320, 60, 20, 40, 50
    top = ymax if ymax is not None else max(float(values.max(initial=0.0)) * 1.1, 1e-12)
    pw, ph = W - L - R, H - T - B
    slot = pw / max(len(values), 1)
    body = [_text(W / 2, 22, title), _text(16, T + ph / 2, ylabel, extra=f' transform="rotate(-90 16 {_n(T + ph / 2)})"'),
            f'<line x1="{L}" y1="{T + ph}" x2="{L + pw}" y2="{T + ph}" stroke="black"/>',
            f'<line x1="{L}" y1="{T}" x2="{L}" y2="{T + ph}" stroke="black"/>']
    for k in range(5):
        v = top * k / 4
        y = T + ph - ph * v / top
        body.append(_text(L - 6, y + 4, f"{v:.2f}", anchor="end"))
    for i, (lab, v) in enumerate(zip(labels, values)):
        h = ph * max(v, 0.0) / top
        x = L + i * slot + 0.15 * slot
        body.append(f'<rect class="bar" data-value="{v:.6f}" x="{_n(x)}" y="{_n(T + ph - h)}" '
                    f'width="{_n(0.7 * slot)}" height="{_n(h)}" fill="{PALETTE[i % len(PALETTE)]}"/>')
        body.append(_text(x + 0.35 * slot, T + ph - h - 4, f"{v:.3f}"))
        body.append(_text(x + 0.35 * slot, T + ph + 18, lab))
    return _svg(W, H, body)


def line_plot(series: dict, title: str = "", xlabel: str = "", ylabel: str = "",
              hline: float | None = None, ylim=(0.0, 1.0)) -> str:
    """``series`` maps label -> (x, y). One <polyline class="curve"> per series, with a legend."""
    W, H, L, R, T, B = 520, 340, 60, 150, 40, 50
    pw, ph = W - L - R, H - T - B
    xs = np.concatenate([np.asarray(x, float) for x, _ in series.values()]) if series else np.array([0.0, 1.0])
    x0, x1 = float(xs.min()), float(xs.max())
    x1 = x1 if x1 > x0 else x0 + 1.0
    y0, y1 = ylim

    def px(x):
        return L + pw * (x - x0) / (x1 - x0)

    def py(y):
        return T + ph - ph * (np.clip(y, y0, y1) - y0) / (y1 - y0)

    body = [_text(L + pw / 2, 22, title), _text(L + pw / 2, H - 12, xlabel),
            _text(16, T + ph / 2, ylabel, extra=f' transform="rotate(-90 16 {_n(T + ph / 2)})"'),
            f'<rect x="{L}" y="{T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for k in range(5):
        xv, yv = x0 + (x1 - x0) * k / 4, y0 + (y1 - y0) * k / 4
        body.append(_text(px(xv), T + ph + 16, f"{xv:.2f}"))
        body.append(_text(L - 6, py(yv) + 4, f"{yv:.2f}", anchor="end"))
    if hline is not None:
        body.append(f'<line x1="{L}" y1="{_n(py(hline))}" x2="{L + pw}" y2="{_n(py(hline))}" '
                    f'stroke="gray" stroke-dasharray="4 3"/>')
    for i, (lab, (x, y)) in enumerate(series.items()):
        c = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{_n(px(a))},{_n(py(b))}" for a, b in zip(x, y))
        body.append(f'<polyline class="curve" data-label="{escape(str(lab))}" points="{pts}" '
                    f'fill="none" stroke="{c}" stroke-width="2"/>')
        ly = T + 14 + 18 * i
        body.append(f'<line x1="{L + pw + 12}" y1="{ly - 4}" x2="{L + pw + 32}" y2="{ly - 4}" stroke="{c}" stroke-width="2"/>')
        body.append(_text(L + pw + 38, ly, lab, anchor="start"))
    return _svg(W, H, body)


def cd_diagram(diagram, title: str = "") -> str:
    """Critical-difference diagram: rank axis, one tick per classifier and
    thick bars joining groups whose mean ranks differ by less than the CD."""
    names, ranks, k = diagram.names, np.asarray(diagram.mean_ranks, float), len(diagram.names)
    W, L, R, T = 560, 140, 140, 70
    half = (k + 1) // 2
    H = T + 40 + 22 * half + 14 * len(diagram.cliques)
    pw = W - L - R

    def px(r):
        return L + pw * (r - 1) / max(k - 1, 1)

    body = [_text(W / 2, 18, title),
            f'<line x1="{L}" y1="{T}" x2="{L + pw}" y2="{T}" stroke="black"/>']
    for r in range(1, k + 1):
        body.append(f'<line x1="{_n(px(r))}" y1="{T - 5}" x2="{_n(px(r))}" y2="{T}" stroke="black"/>')
        body.append(_text(px(r), T - 9, r))
    # CD reference segment
    body.append(f'<line class="cd" x1="{_n(px(1))}" y1="{T - 38}" x2="{_n(px(1 + diagram.cd))}" '
                f'y2="{T - 38}" stroke="black" stroke-width="2"/>')
    body.append(_text((px(1) + px(1 + diagram.cd)) / 2, T - 44, f"CD = {diagram.cd:.3f}"))
    order = list(np.argsort(ranks, kind="mergesort"))
    bar_y = T + 10
    for c in diagram.cliques:
        if len(c) < 2:
            continue
        a, b = ranks[c[0]], ranks[c[-1]]
        body.append(f'<line class="clique" x1="{_n(px(a) - 3)}" y1="{bar_y}" x2="{_n(px(b) + 3)}" '
                    f'y2="{bar_y}" stroke="black" stroke-width="4"/>')
        bar_y += 10
    base = max(bar_y, T + 16) + 12
    for pos, j in enumerate(order):
        left = pos < half
        y = base + 22 * (pos if left else k - 1 - pos)
        x = px(ranks[j])
        ex = L - 10 if left else L + pw + 10
        body.append(f'<polyline points="{_n(x)},{T} {_n(x)},{_n(y)} {_n(ex)},{_n(y)}" fill="none" stroke="black"/>')
        body.append(_text(ex + (-4 if left else 4), y + 4, f"{names[j]} ({ranks[j]:.2f})",
                          anchor="end" if left else "start"))
    return _svg(W, H, body)


def write(path, svg: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(svg)
