"""Static SVG pictures: class heatmaps over the box grid and basin maps of sampled initial points."""
from __future__ import annotations

import colorsys

import numpy as np

_SIZE = 512


def _palette(n):
    out = []
    for i in range(max(n, 1)):
        r, g, b = colorsys.hsv_to_rgb((i * 0.618033988749895) % 1.0, 0.65, 0.9)
        out.append(f"#{int(r * 255):02x}{int(g * 255):02x}{int(b * 255):02x}")
    return out


def _doc(body, width=_SIZE, height=_SIZE, title=""):
    head = f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">\n'
    head += f"<title>{title}</title>\n" if title else ""
    head += f'<rect width="{width}" height="{height}" fill="#f4f4f4"/>\n'
    return head + "".join(body) + "</svg>\n"


def class_heatmap(grid, classes, title="chain recurrent classes"):
    """Boxes colored by class id; boxes outside every class stay light gray.

    1-D grids (and cylinder grids, in lexicographic order) are drawn as a strip.
    """
    colors = _palette(len(classes))
    body = []
    two_d = not grid.symbolic and grid.dimension == 2
    if two_d:
        n = grid.per_axis
        cell = _SIZE / n
        for cls in classes:
            for b in cls.boxes:
                i, j = grid.box_index(b)
                body.append(f'<rect x="{i * cell:.3f}" y="{_SIZE - (j + 1) * cell:.3f}" width="{cell:.3f}" height="{cell:.3f}" fill="{colors[cls.id]}"/>\n')
        return _doc(body, title=title)
    n = grid.n_boxes
    cell = _SIZE / n
    height = 64
    for cls in classes:
        for b in cls.boxes:
            body.append(f'<rect x="{b * cell:.3f}" y="0" width="{cell:.3f}" height="{height}" fill="{colors[cls.id]}"/>\n')
    return _doc(body, height=height, title=title)


def basin_map(points, labels, n_clusters, title="basins"):
    """Initial conditions (1-D or 2-D, in [0,1)^d) colored by cluster; unclustered in black."""
    pts = np.asarray(points, dtype=float)
    colors = _palette(n_clusters)
    body = []
    two_d = pts.shape[1] >= 2
    height = _SIZE if two_d else 64
    for p, lab in zip(pts, labels):
        x = p[0] * _SIZE
        y = _SIZE - p[1] * _SIZE if two_d else 32
        color = colors[lab] if lab >= 0 else "#000000"
        body.append(f'<circle cx="{x:.3f}" cy="{y:.3f}" r="2" fill="{color}"/>\n')
    return _doc(body, height=height, title=title)
