"""Minimal deterministic SVG heatmaps (no plotting dependency)."""

import numpy as np

# viridis anchor colors, linearly interpolated
_ANCHORS = np.array([
    [68, 1, 84], [72, 40, 120], [62, 74, 137], [49, 104, 142], [38, 130, 142],
    [31, 158, 137], [53, 183, 121], [109, 205, 89], [180, 222, 44], [253, 231, 37],
], dtype=float)


def colormap(v):
    v = float(np.clip(v, 0.0, 1.0)) * (len(_ANCHORS) - 1)
    i = min(int(v), len(_ANCHORS) - 2)
    f = v - i
    c = (1 - f) * _ANCHORS[i] + f * _ANCHORS[i + 1]
    return "#{:02x}{:02x}{:02x}".format(*(int(round(x)) for x in c))


def heatmap_svg(values, x_range, y_range, title, x_label, y_label, cell=8):
    """SVG text for ``values[i, j]`` at ``(x_i, y_j)``; rows of ``values`` run along x.

    Output depends only on the inputs (fixed number formatting), so equal
    inputs give byte-identical files.
    """
    values = np.asarray(values, dtype=float)
    nx, ny = values.shape
    lo, hi = np.nanmin(values), np.nanmax(values)
    span = hi - lo if hi > lo else 1.0
    left, top, bar = 60, 30, 20
    w, h = nx * cell, ny * cell
    width, height = left + w + bar + 90, top + h + 50
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<text x="{left}" y="18">{_esc(title)}</text>',
    ]
    for i in range(nx):
        for j in range(ny):
            color = colormap((values[i, j] - lo) / span)
            y = top + (ny - 1 - j) * cell
            out.append(f'<rect x="{left + i * cell}" y="{y}" width="{cell}" height="{cell}" fill="{color}"/>')
    out.append(f'<rect x="{left}" y="{top}" width="{w}" height="{h}" fill="none" stroke="black"/>')
    out.append(f'<text x="{left}" y="{top + h + 15}">{x_range[0]:.4g}</text>')
    out.append(f'<text x="{left + w}" y="{top + h + 15}" text-anchor="end">{x_range[1]:.4g}</text>')
    out.append(f'<text x="{left + w / 2:.1f}" y="{top + h + 35}" text-anchor="middle">{_esc(x_label)}</text>')
    out.append(f'<text x="{left - 5}" y="{top + h}" text-anchor="end">{y_range[0]:.4g}</text>')
    out.append(f'<text x="{left - 5}" y="{top + 10}" text-anchor="end">{y_range[1]:.4g}</text>')
    out.append(f'<text x="15" y="{top + h / 2:.1f}" transform="rotate(-90 15 {top + h / 2:.1f})" '
               f'text-anchor="middle">{_esc(y_label)}</text>')
    bx = left + w + 10
    steps = 32
    for k in range(steps):
        y = top + h - (k + 1) * h / steps
        out.append(f'<rect x="{bx}" y="{y:.2f}" width="{bar}" height="{h / steps + 0.5:.2f}" '
                   f'fill="{colormap(k / (steps - 1))}"/>')
    out.append(f'<text x="{bx + bar + 4}" y="{top + h}">{lo:.4g}</text>')
    out.append(f'<text x="{bx + bar + 4}" y="{top + 10}">{hi:.4g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s):
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
