"""Geometric coverage-hole detector and the polygon annotation format.

A hole is a 4-connected component of uncovered pixels that does not touch
the image border and is at least ``a_min`` pixels large.  Its outline is
traced with Moore-neighbour boundary following (8-connected steps).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .raster import CoverageImage, label_components, regions_from_labels

DEFAULT_A_MIN = 25

# screen-clockwise starting west; traced outlines come out with positive
# shoelace area in (x, y), i.e. counterclockwise in pixel coordinates
_MOORE = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)]
_MOORE_INDEX = {d: i for i, d in enumerate(_MOORE)}


@dataclass
class HoleRegion:
    pixels: np.ndarray | None  # (k, 2) [x, y]; None when loaded from a file
    contour: np.ndarray | None = None  # (m, 2) [x, y], closing edge implied
    boundary_node_ids: tuple[int, ...] = ()

    @property
    def area(self) -> int:
        return 0 if self.pixels is None else len(self.pixels)


@dataclass
class Annotation:
    width: int
    height: int
    holes: list[HoleRegion] = field(default_factory=list)
    image_path: str = ""

    def to_dict(self) -> dict:
        return {
            "version": "wsnholes-1",
            "flags": {},
            "shapes": [
                {
                    "label": "hole",
                    "shape_type": "polygon",
                    "points": np.asarray(h.contour).astype(int).tolist(),
                    "boundary_node_ids": [int(i) for i in sorted(h.boundary_node_ids)],
                    "group_id": None,
                    "flags": {},
                }
                for h in self.holes
            ],
            "imagePath": self.image_path,
            "imageData": None,
            "imageHeight": int(self.height),
            "imageWidth": int(self.width),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=False) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def from_dict(cls, data: dict) -> "Annotation":
        try:
            width, height = int(data["imageWidth"]), int(data["imageHeight"])
            shapes = data.get("shapes", [])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"not a hole annotation: {exc}") from exc
        holes = []
        for sh in shapes:
            if sh.get("label", "hole") != "hole":
                continue
            if sh.get("shape_type", "polygon") != "polygon":
                raise ValueError(f"unsupported shape_type {sh.get('shape_type')!r}")
            pts = np.asarray(sh["points"], dtype=float).reshape(-1, 2)
            ids = tuple(int(i) for i in sh.get("boundary_node_ids", []))
            holes.append(HoleRegion(None, pts, ids))
        return cls(width, height, holes, data.get("imagePath", ""))

    @classmethod
    def load(cls, path) -> "Annotation":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def find_hole_regions(img: CoverageImage | np.ndarray, a_min: int = DEFAULT_A_MIN) -> list[HoleRegion]:
    """Interior uncovered components of at least ``a_min`` pixels, largest first.

    ``img`` may also be a bare boolean coverage array.
    """
    covered = img.coverage if isinstance(img, CoverageImage) else np.asarray(img, dtype=bool)
    labels, count = label_components(~covered)
    if count == 0:
        return []
    border = np.unique(np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]]))
    sizes = np.bincount(labels.ravel(), minlength=count + 1)
    keep_mask = sizes >= a_min
    keep_mask[0] = False
    keep_mask[border] = False
    keep = [int(i) for i in np.flatnonzero(keep_mask)]
    keep.sort(key=lambda i: (-sizes[i], i))
    return [HoleRegion(pix) for pix in regions_from_labels(labels, keep)]


def trace_contour(region) -> np.ndarray:
    """Moore-neighbour outline of a pixel region.

    Starts at the lexicographically smallest ``[x, y]`` pixel and walks the
    outer boundary with positive signed area in (x, y); returns the ordered
    boundary pixels without repeating the start.
    """
    pix = region.pixels if isinstance(region, HoleRegion) else region
    pix = np.asarray(pix, dtype=np.int64).reshape(-1, 2)
    if len(pix) == 0:
        raise ValueError("cannot trace an empty region")
    x0, y0 = pix.min(axis=0)
    x1, y1 = pix.max(axis=0)
    mask = np.zeros((y1 - y0 + 3, x1 - x0 + 3), dtype=bool)
    mask[pix[:, 1] - y0 + 1, pix[:, 0] - x0 + 1] = True

    order = np.lexsort((pix[:, 1], pix[:, 0]))
    sx, sy = pix[order[0]]
    start = (int(sx - x0 + 1), int(sy - y0 + 1))

    def step(cur, back_dir):
        # scan the 8 neighbours clockwise from the backtrack direction
        i0 = _MOORE_INDEX[back_dir]
        for j in range(1, 9):
            dx, dy = _MOORE[(i0 + j) % 8]
            nx, ny = cur[0] + dx, cur[1] + dy
            if mask[ny, nx]:
                pdx, pdy = _MOORE[(i0 + j - 1) % 8]
                # previous (background) neighbour, seen from the new pixel
                return (nx, ny), (cur[0] + pdx - nx, cur[1] + pdy - ny)
        return None, None

    out = [start]
    nxt, back = step(start, (-1, 0))
    if nxt is None:
        return np.array([[sx, sy]], dtype=np.int64)
    first_move = (nxt, back)
    cur = nxt
    limit = 8 * len(pix) + 8
    while len(out) <= limit:
        out.append(cur)
        nxt, back = step(cur, back)
        if cur == start and (nxt, back) == first_move:
            out.pop()
            break
        cur = nxt
    contour = np.asarray(out, dtype=np.int64) + np.array([x0 - 1, y0 - 1])
    return contour


def detect_holes(img: CoverageImage, a_min: int = DEFAULT_A_MIN, image_path: str = "") -> Annotation:
    holes = find_hole_regions(img, a_min)
    for h in holes:
        h.contour = trace_contour(h)
    return Annotation(img.width, img.height, holes, image_path)
