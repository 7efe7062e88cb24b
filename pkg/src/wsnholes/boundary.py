"""Which nodes sit on a hole's boundary.

A node is on a hole's boundary when its pixel position lies within ``tol``
pixels of the hole's contour polyline.  Contour pixels are uncovered, so they
are always farther than the sensing radius from every node; the default
``tol`` therefore adds a small pixel slack on top of the sensing radius.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .detect import Annotation
from .geometry import distance_to_polyline, point_in_polygon
from .raster import CanvasTransform

# covers the up-to-sqrt(2) px gap between an arc-forming node's disk and the
# nearest uncovered pixel center
TOL_SLACK_PX = 2.0


class BoundaryError(ValueError):
    pass


@dataclass(frozen=True)
class BoundaryResult:
    per_hole: tuple[frozenset[int], ...]
    inside: frozenset[int] = field(default_factory=frozenset)

    @property
    def ids(self) -> frozenset[int]:
        out: set[int] = set()
        for s in self.per_hole:
            out |= s
        return frozenset(out)


def default_tolerance(rs_pixels: float) -> float:
    return rs_pixels + TOL_SLACK_PX


def point_test(node_pixel, contour, tol: float) -> bool:
    """True iff the point is within ``tol`` of the closed contour (inclusive)."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    contour = np.asarray(contour, dtype=float).reshape(-1, 2)
    if len(contour) == 0:
        raise ValueError("contour needs at least one vertex")
    return bool(distance_to_polyline(np.asarray(node_pixel, dtype=float), contour)[0] <= tol)


def boundary_node_ids(annotation: Annotation, positions, transform: CanvasTransform, tol: float) -> BoundaryResult:
    """Per-hole boundary node sets for an annotation drawn on ``transform``'s canvas.

    Nodes found strictly inside a hole polygon deeper than ``tol`` are not
    boundary nodes; they are returned in ``inside`` because a hole should
    contain no working sensor.
    """
    if (annotation.width, annotation.height) != (transform.width, transform.height):
        raise BoundaryError(
            f"annotation is {annotation.width}x{annotation.height} but the canvas is "
            f"{transform.width}x{transform.height}"
        )
    px = transform.apply(positions)
    per_hole, inside = [], set()
    for hole in annotation.holes:
        contour = np.asarray(hole.contour, dtype=float).reshape(-1, 2)
        if len(contour) == 0:
            per_hole.append(frozenset())
            continue
        lo, hi = contour.min(axis=0) - tol, contour.max(axis=0) + tol
        cand = np.flatnonzero(((px >= lo) & (px <= hi)).all(axis=1))
        if len(cand) == 0:
            per_hole.append(frozenset())
            continue
        d = distance_to_polyline(px[cand], contour)
        per_hole.append(frozenset(cand[d <= tol].tolist()))
        if len(contour) >= 3:
            deep = cand[d > tol]
            if len(deep):
                inside.update(deep[point_in_polygon(px[deep], contour)].tolist())
    return BoundaryResult(tuple(per_hole), frozenset(inside))


def write_id_list(ids, path) -> None:
    with open(path, "w") as fh:
        fh.writelines(f"{i}\n" for i in sorted(ids))
