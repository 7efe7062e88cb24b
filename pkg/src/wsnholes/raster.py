"""Sensing-disk coverage bitmaps and color-coded region I/O.

Pixel coordinates are continuous with integer values at pixel centers, so
pixel ``(x, y)`` is column ``x`` and row ``y`` of the image array and its
center sits at exactly ``(x, y)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage

PINK = (255, 192, 203)
WHITE = (255, 255, 255)
NODE_RED = (180, 0, 60)
TRUTH_RED = (255, 0, 0)
DETECTED_BLUE = (0, 0, 255)

OVERLAY_COLORS = {"truth": TRUTH_RED, "detected": DETECTED_BLUE}

DEFAULT_SIZE = 1024
DEFAULT_MARGIN = 32
NODE_DOT_RADIUS = 2.0


class RasterError(ValueError):
    pass


@dataclass(frozen=True)
class CanvasTransform:
    scale: float
    offset: tuple[float, float]
    width: int = DEFAULT_SIZE
    height: int = DEFAULT_SIZE
    margin: int = DEFAULT_MARGIN

    def apply(self, positions) -> np.ndarray:
        """World coordinates -> continuous pixel coordinates ``(x, y)``."""
        pos = np.asarray(positions, dtype=float).reshape(-1, 2)
        return pos * self.scale + np.asarray(self.offset)


@dataclass(frozen=True)
class CoverageImage:
    coverage: np.ndarray  # bool, shape (height, width), indexed [y, x]
    transform: CanvasTransform
    rs_pixels: float
    node_pixels: np.ndarray | None = None

    @property
    def width(self) -> int:
        return self.coverage.shape[1]

    @property
    def height(self) -> int:
        return self.coverage.shape[0]


def fit_transform(positions, width: int = DEFAULT_SIZE, height: int = DEFAULT_SIZE,
                  margin: int = DEFAULT_MARGIN) -> CanvasTransform:
    """Isotropic fit of the positions' bounding box into the margin-inset canvas.

    A zero-extent bounding box maps to the canvas center with scale 1.
    """
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    if len(pos) == 0:
        raise RasterError("need at least one position")
    if width <= 2 * margin or height <= 2 * margin:
        raise RasterError("canvas too small for the margin")
    lo, hi = pos.min(axis=0), pos.max(axis=0)
    ext = hi - lo
    avail = np.array([width - 2 * margin, height - 2 * margin], dtype=float)
    ratios = [a / e for a, e in zip(avail, ext) if e > 0]
    scale = min(ratios) if ratios else 1.0
    mid = (lo + hi) / 2.0
    offset = np.array([width / 2.0, height / 2.0]) - scale * mid
    return CanvasTransform(float(scale), (float(offset[0]), float(offset[1])), width, height, margin)


def render_coverage(positions, transform: CanvasTransform, sensing_range: float) -> CoverageImage:
    """Pixel is covered iff its center is within the sensing radius of a node."""
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    if len(pos) == 0:
        raise RasterError("cannot render an empty layout")
    rs = sensing_range * transform.scale
    if rs < 1.0:
        raise RasterError(f"sensing radius below pixel resolution ({rs:.3f} px)")
    w, h = transform.width, transform.height
    px = transform.apply(pos)
    covered = np.zeros((h, w), dtype=bool)
    rs2 = rs * rs
    xs = np.arange(w, dtype=float)
    ys = np.arange(h, dtype=float)
    for x, y in px:
        x0, x1 = max(int(np.floor(x - rs)), 0), min(int(np.ceil(x + rs)) + 1, w)
        y0, y1 = max(int(np.floor(y - rs)), 0), min(int(np.ceil(y + rs)) + 1, h)
        if x0 >= x1 or y0 >= y1:
            continue
        dx = xs[x0:x1] - x
        dy = ys[y0:y1] - y
        covered[y0:y1, x0:x1] |= (dy * dy)[:, None] + (dx * dx)[None, :] <= rs2
    return CoverageImage(covered, transform, float(rs), px)


def _paint_dots(rgb: np.ndarray, points: np.ndarray, radius: float, color) -> None:
    h, w = rgb.shape[:2]
    r = int(np.ceil(radius))
    for x, y in points:
        cx, cy = int(round(x)), int(round(y))
        for dy in range(-r, r + 1):
            for dx in range(-r, r + 1):
                if dx * dx + dy * dy <= radius * radius:
                    xx, yy = cx + dx, cy + dy
                    if 0 <= xx < w and 0 <= yy < h:
                        rgb[yy, xx] = color


def to_rgb(img: CoverageImage, overlays=(), draw_nodes: bool = True) -> np.ndarray:
    """RGB rendering: pink coverage, white gaps, overlays, then node dots.

    ``overlays`` is a sequence of ``(kind, regions)`` where kind is
    ``"truth"`` (red) or ``"detected"`` (blue) and each region is an
    ``(k, 2)`` array of ``[x, y]`` pixels.
    """
    rgb = np.empty((img.height, img.width, 3), dtype=np.uint8)
    rgb[:] = WHITE
    rgb[img.coverage] = PINK
    for kind, regions in overlays:
        if kind not in OVERLAY_COLORS:
            raise RasterError(f"unknown overlay kind {kind!r}")
        for pix in regions:
            pix = np.asarray(pix, dtype=np.int64).reshape(-1, 2)
            rgb[pix[:, 1], pix[:, 0]] = OVERLAY_COLORS[kind]
    if draw_nodes and img.node_pixels is not None:
        _paint_dots(rgb, img.node_pixels, NODE_DOT_RADIUS, NODE_RED)
    return rgb


def export_image(img: CoverageImage, path, overlays=(), draw_nodes: bool = True) -> np.ndarray:
    rgb = to_rgb(img, overlays, draw_nodes)
    Image.fromarray(rgb, mode="RGB").save(path, format="PNG")
    return rgb


def load_rgb(image) -> np.ndarray:
    """Accept a path, a PIL image or an array; return ``(h, w, 3)`` uint8."""
    if isinstance(image, np.ndarray):
        arr = image
    elif isinstance(image, Image.Image):
        arr = np.asarray(image.convert("RGB"))
    else:
        try:
            with Image.open(image) as im:
                arr = np.asarray(im.convert("RGB"))
        except (OSError, ValueError) as exc:
            raise RasterError(f"cannot read image {image}: {exc}") from exc
    if arr.ndim != 3 or arr.shape[2] < 3:
        raise RasterError("expected an RGB image")
    return np.ascontiguousarray(arr[:, :, :3]).astype(np.uint8)


def label_components(mask: np.ndarray) -> tuple[np.ndarray, int]:
    """4-connected component labels of a boolean mask (0 = background)."""
    labels, count = ndimage.label(mask)
    return labels, int(count)


def regions_from_labels(labels: np.ndarray, keep) -> list[np.ndarray]:
    """Pixel lists ``[x, y]`` (row-major order) for the given label ids."""
    out = []
    slices = ndimage.find_objects(labels)
    for lab in keep:
        sl = slices[lab - 1]
        ys, xs = np.nonzero(labels[sl] == lab)
        out.append(np.column_stack([xs + sl[1].start, ys + sl[0].start]).astype(np.int64))
    return out


def extract_regions_by_color(image, color, tolerance: int = 0) -> list[np.ndarray]:
    """4-connected regions of pixels within ``tolerance`` of ``color`` per channel.

    Regions come back largest first (ties in raster order), each as an
    ``(k, 2)`` array of ``[x, y]``.
    """
    if not 0 <= tolerance <= 8:
        raise RasterError("tolerance must be between 0 and 8")
    if len(color) != 3:
        raise RasterError("color must be an RGB triple")
    rgb = load_rgb(image).astype(np.int16)
    target = np.asarray(color, dtype=np.int16)
    mask = (np.abs(rgb - target) <= tolerance).all(axis=2)
    labels, count = label_components(mask)
    if count == 0:
        return []
    sizes = np.bincount(labels.ravel())[1:]
    order = sorted(range(1, count + 1), key=lambda i: (-sizes[i - 1], i))
    return regions_from_labels(labels, order)
