"""Minimal standalone SVG charts: grouped bars, line plots and heatmaps."""
from __future__ import annotations

from html import escape

PALETTE = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#b07aa1", "#9c755f", "#76b7b2", "#edc948"]


def _doc(width, height, body):
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">\n'
        + "\n".join(body)
        + "\n</svg>\n"
    )


def _fmt(v):
    return f"{v:.3g}"


def bar_chart(groups, series, values, title="", ylabel="", width=640, height=360) -> str:
    """``values[g][s]`` is the bar for group ``g`` and series ``s``."""
    left, right, top, bottom = 60, 20, 30, 60
    pw, ph = width - left - right, height - top - bottom
    vmax = max([v for row in values for v in row if v == v] + [1e-12])
    body = [f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>']
    body.append(f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>')
    body.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>')
    for j in range(5):
        v = vmax * j / 4
        y = top + ph - ph * j / 4
        body.append(f'<text x="{left - 4}" y="{y + 4}" text-anchor="end">{_fmt(v)}</text>')
    gw = pw / max(len(groups), 1)
    bw = gw * 0.8 / max(len(series), 1)
    for gi, g in enumerate(groups):
        x0 = left + gi * gw + gw * 0.1
        for si in range(len(series)):
            v = values[gi][si]
            if v != v:
                continue
            h = ph * max(v, 0) / vmax
            body.append(
                f'<rect x="{x0 + si * bw:.1f}" y="{top + ph - h:.1f}" width="{bw * 0.95:.1f}" '
                f'height="{h:.1f}" fill="{PALETTE[si % len(PALETTE)]}"><title>{escape(str(series[si]))}: {_fmt(v)}</title></rect>'
            )
        body.append(f'<text x="{left + gi * gw + gw / 2}" y="{top + ph + 14}" text-anchor="middle">{escape(str(g))}</text>')
    for si, s in enumerate(series):
        x = left + si * 90
        body.append(f'<rect x="{x}" y="{height - 22}" width="10" height="10" fill="{PALETTE[si % len(PALETTE)]}"/>')
        body.append(f'<text x="{x + 14}" y="{height - 13}">{escape(str(s))}</text>')
    body.append(f'<text x="14" y="{top + ph / 2}" transform="rotate(-90 14 {top + ph / 2})" text-anchor="middle">{escape(ylabel)}</text>')
    return _doc(width, height, body)


def line_chart(series: dict, title="", xlabel="", ylabel="", width=640, height=360) -> str:
    """``series[name] = [(x, y), ...]``."""
    left, right, top, bottom = 60, 20, 30, 60
    pw, ph = width - left - right, height - top - bottom
    pts = [p for s in series.values() for p in s if p[1] == p[1]]
    xs = [p[0] for p in pts] or [0, 1]
    ys = [p[1] for p in pts] or [0, 1]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys + [0.0]), max(ys)
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1

    def sx(x):
        return left + pw * (x - x0) / (x1 - x0)

    def sy(y):
        return top + ph - ph * (y - y0) / (y1 - y0)

    body = [f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>']
    body.append(f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>')
    body.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>')
    for j in range(5):
        xv = x0 + (x1 - x0) * j / 4
        yv = y0 + (y1 - y0) * j / 4
        body.append(f'<text x="{sx(xv):.1f}" y="{top + ph + 14}" text-anchor="middle">{_fmt(xv)}</text>')
        body.append(f'<text x="{left - 4}" y="{sy(yv) + 4:.1f}" text-anchor="end">{_fmt(yv)}</text>')
    for si, (name, s) in enumerate(series.items()):
        color = PALETTE[si % len(PALETTE)]
        good = [(x, y) for x, y in s if y == y]
        if good:
            path = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in good)
            body.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"/>')
            for x, y in good:
                body.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="3" fill="{color}"/>')
        body.append(f'<rect x="{left + si * 90}" y="{height - 22}" width="10" height="10" fill="{color}"/>')
        body.append(f'<text x="{left + si * 90 + 14}" y="{height - 13}">{escape(str(name))}</text>')
    body.append(f'<text x="{left + pw / 2}" y="{height - 30}" text-anchor="middle">{escape(xlabel)}</text>')
    body.append(f'<text x="14" y="{top + ph / 2}" transform="rotate(-90 14 {top + ph / 2})" text-anchor="middle">{escape(ylabel)}</text>')
    return _doc(width, height, body)


def heatmap(row_labels, col_labels, grid, title="", xlabel="", ylabel="", width=520, height=420) -> str:
    left, right, top, bottom = 70, 20, 30, 50
    pw, ph = width - left - right, height - top - bottom
    vals = [v for row in grid for v in row if v == v]
    lo, hi = (min(vals), max(vals)) if vals else (0.0, 1.0)
    span = hi - lo if hi > lo else 1.0
    cw, ch = pw / max(len(col_labels), 1), ph / max(len(row_labels), 1)
    body = [f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>']
    for i, rl in enumerate(row_labels):
        for j in range(len(col_labels)):
            v = grid[i][j]
            if v == v:
                t = (v - lo) / span
                color = f"rgb({int(255 * (1 - t))},{int(120 + 100 * t)},{int(255 * t)})"
                label = _fmt(v)
            else:
                color, label = "#cccccc", "n/a"
            x, y = left + j * cw, top + i * ch
            body.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{cw:.1f}" height="{ch:.1f}" fill="{color}" stroke="white"/>')
            body.append(f'<text x="{x + cw / 2:.1f}" y="{y + ch / 2 + 4:.1f}" text-anchor="middle">{label}</text>')
        body.append(f'<text x="{left - 4}" y="{top + i * ch + ch / 2 + 4:.1f}" text-anchor="end">{escape(str(rl))}</text>')
    for j, cl in enumerate(col_labels):
        body.append(f'<text x="{left + j * cw + cw / 2:.1f}" y="{top + ph + 14}" text-anchor="middle">{escape(str(cl))}</text>')
    body.append(f'<text x="{left + pw / 2}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    body.append(f'<text x="14" y="{top + ph / 2}" transform="rotate(-90 14 {top + ph / 2})" text-anchor="middle">{escape(ylabel)}</text>')
    return _doc(width, height, body)
