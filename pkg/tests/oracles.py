"""Slow, obviously-correct reference implementations used by the tests."""

from collections import deque

import numpy as np
from scipy.spatial import cKDTree


def naive_coverage(node_pixels, rs, width, height):
    """Per-pixel, per-node distance check over the whole canvas."""
    ys, xs = np.mgrid[0:height, 0:width].astype(float)
    cov = np.zeros((height, width), dtype=bool)
    rs2 = rs * rs
    for x, y in np.asarray(node_pixels, dtype=float).reshape(-1, 2):
        dx = xs - x
        dy = ys - y
        cov |= dy * dy + dx * dx <= rs2
    return cov


def flood_regions(mask):
    """4-connected components of ``mask`` by BFS, in raster order of their
    first pixel; each is a set of (x, y) plus a border-touching flag."""
    h, w = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    out = []
    for y in range(h):
        for x in range(w):
            if not mask[y, x] or seen[y, x]:
                continue
            seen[y, x] = True
            queue = deque([(x, y)])
            pix, border = set(), False
            while queue:
                cx, cy = queue.popleft()
                pix.add((cx, cy))
                if cx in (0, w - 1) or cy in (0, h - 1):
                    border = True
                for nx, ny in ((cx + 1, cy), (cx - 1, cy), (cx, cy + 1), (cx, cy - 1)):
                    if 0 <= nx < w and 0 <= ny < h and mask[ny, nx] and not seen[ny, nx]:
                        seen[ny, nx] = True
                        queue.append((nx, ny))
            out.append((pix, border))
    return out


def interior_holes(covered, a_min):
    """Oracle for find_hole_regions: pixel sets, largest first, ties by first pixel."""
    regs = [pix for pix, border in flood_regions(~covered) if not border and len(pix) >= a_min]
    return sorted(regs, key=lambda p: (-len(p), min((y, x) for x, y in p)))


def void_hole(node_pixels, rs, center_px, reach_px):
    """Uncovered pixels 4-connected to the pixel nearest ``center_px``.

    Coverage is checked node by node inside a window of half-width
    ``reach_px``; returns None if the flood reaches the window edge (the
    hole is open or the window too small).
    """
    cx, cy = int(round(center_px[0])), int(round(center_px[1]))
    r = int(np.ceil(reach_px))
    x0, y0 = cx - r, cy - r
    size = 2 * r + 1
    win = naive_coverage(np.asarray(node_pixels, dtype=float) - [x0, y0], rs, size, size)
    if win[cy - y0, cx - x0]:
        return None
    for pix, border in flood_regions(~win):
        if (cx - x0, cy - y0) in pix:
            if border:
                return None
            return {(x + x0, y + y0) for x, y in pix}
    return None


def pixel_set_boundary(node_pixels, holes, tol):
    """Nodes within ``tol`` of any pixel of any hole."""
    pts = np.array(sorted(set().union(*holes)), dtype=float)
    d, _ = cKDTree(pts).query(np.asarray(node_pixels, dtype=float))
    return set(np.flatnonzero(d <= tol).tolist())


def naive_point_to_polyline(p, contour):
    """Scalar segment-by-segment distance to a closed polyline."""
    best = np.inf
    m = len(contour)
    for i in range(m):
        ax, ay = contour[i]
        bx, by = contour[(i + 1) % m]
        vx, vy = bx - ax, by - ay
        L2 = vx * vx + vy * vy
        t = 0.0 if L2 == 0 else max(0.0, min(1.0, ((p[0] - ax) * vx + (p[1] - ay) * vy) / L2))
        qx, qy = ax + t * vx, ay + t * vy
        best = min(best, float(np.hypot(p[0] - qx, p[1] - qy)))
    return best
