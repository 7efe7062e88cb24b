"""Planar helpers for closed pixel polygons."""

from __future__ import annotations

import numpy as np


def _closed_segments(contour: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c = np.asarray(contour, dtype=float).reshape(-1, 2)
    return c, np.roll(c, -1, axis=0)


def distance_to_polyline(points, contour, chunk: int = 4096) -> np.ndarray:
    """Euclidean distance from each point to the closed polyline ``contour``.

    Segment distance, not vertex distance; a one-vertex contour is a point.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    a, b = _closed_segments(contour)
    ab = b - a
    len2 = (ab**2).sum(axis=1)
    safe = np.where(len2 > 0, len2, 1.0)
    out = np.empty(len(pts))
    for s in range(0, len(pts), chunk):
        p = pts[s:s + chunk]
        ap = p[:, None, :] - a[None, :, :]
        t = np.clip((ap * ab[None]).sum(axis=2) / safe[None], 0.0, 1.0)
        t = np.where(len2[None] > 0, t, 0.0)
        d = ap - t[..., None] * ab[None]
        out[s:s + chunk] = np.sqrt((d**2).sum(axis=2).min(axis=1))
    return out


def point_in_polygon(points, contour, chunk: int = 4096) -> np.ndarray:
    """Even-odd crossing test (boundary points may go either way)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    a, b = _closed_segments(contour)
    out = np.zeros(len(pts), dtype=bool)
    ya, yb = a[None, :, 1], b[None, :, 1]
    dy = np.where(yb != ya, yb - ya, 1.0)
    for s in range(0, len(pts), chunk):
        x, y = pts[s:s + chunk, 0:1], pts[s:s + chunk, 1:2]
        crosses = (ya > y) != (yb > y)
        xint = a[None, :, 0] + (y - ya) * (b[None, :, 0] - a[None, :, 0]) / dy
        out[s:s + chunk] = ((crosses & (x < xint)).sum(axis=1) % 2) == 1
    return out


def signed_area(contour) -> float:
    """Shoelace area; positive for counterclockwise order in (x, y)."""
    a, b = _closed_segments(contour)
    return 0.5 * float((a[:, 0] * b[:, 1] - b[:, 0] * a[:, 1]).sum())


def polygon_pixels(contour) -> np.ndarray:
    """Integer pixels of a closed pixel polygon, as ``[x, y]`` rows.

    Scanline version of :func:`point_in_polygon` plus the vertices themselves.
    For a traced outline this gives back the region with its holes filled.
    """
    c = np.asarray(contour, dtype=np.int64).reshape(-1, 2)
    if len(c) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    x0, y0 = c.min(axis=0)
    x1, y1 = c.max(axis=0)
    mask = np.zeros((y1 - y0 + 1, x1 - x0 + 1), dtype=bool)
    if len(c) >= 3:
        a, b = _closed_segments(c)
        xs = np.arange(x0, x1 + 1, dtype=float)
        for y in range(y0, y1 + 1):
            hit = (a[:, 1] > y) != (b[:, 1] > y)
            if not hit.any():
                continue
            sa, sb = a[hit], b[hit]
            xint = np.sort(sa[:, 0] + (y - sa[:, 1]) * (sb[:, 0] - sa[:, 0]) / (sb[:, 1] - sa[:, 1]))
            right = len(xint) - np.searchsorted(xint, xs, side="right")
            mask[y - y0] = (right % 2) == 1
    mask[c[:, 1] - y0, c[:, 0] - x0] = True
    yy, xx = np.nonzero(mask)
    return np.column_stack([xx + x0, yy + y0]).astype(np.int64)
