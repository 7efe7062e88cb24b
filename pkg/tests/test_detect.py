import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import interior_holes
from wsnholes.detect import Annotation, detect_holes, find_hole_regions, trace_contour
from wsnholes.geometry import point_in_polygon, signed_area
from wsnholes.raster import CanvasTransform, fit_transform, render_coverage
from wsnholes.topology import HoleSpec, generate_topology


def as_set(pix):
    return {tuple(p) for p in np.asarray(pix).tolist()}


def random_covered(rng, size):
    h, w = size
    return rng.random((h, w)) < rng.uniform(0.3, 0.8)


def test_fully_covered_is_empty():
    assert find_hole_regions(np.ones((30, 30), bool)) == []


def test_ring_of_eight_nodes_has_one_hole():
    ang = np.arange(8) * np.pi / 4
    pos = np.column_stack([64 + 30 * np.cos(ang), 64 + 30 * np.sin(ang)])
    tr = CanvasTransform(1.0, (0.0, 0.0), 128, 128, 8)
    img = render_coverage(pos, tr, 14.0)
    assert not img.coverage[64, 64]
    regs = find_hole_regions(img)
    assert len(regs) == 1
    assert (64, 64) in as_set(regs[0].pixels)


def test_border_strip_excluded():
    cov = np.ones((20, 20), bool)
    cov[5:15, 0:8] = False
    assert find_hole_regions(cov, a_min=1) == []
    cov[5:15, 1:8] = False
    cov[5:15, 0] = True
    assert len(find_hole_regions(cov, a_min=1)) == 1


def test_a_min_filters():
    cov = np.ones((20, 20), bool)
    cov[3:5, 3:5] = False
    cov[10:16, 10:16] = False
    regs = find_hole_regions(cov, a_min=5)
    assert [r.area for r in regs] == [36]
    assert [r.area for r in find_hole_regions(cov, a_min=1)] == [36, 4]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_regions_match_flood_fill_oracle(seed):
    rng = np.random.default_rng(seed)
    cov = random_covered(rng, (int(rng.integers(3, 40)), int(rng.integers(3, 40))))
    a_min = int(rng.integers(1, 6))
    got = [as_set(r.pixels) for r in find_hole_regions(cov, a_min)]
    want = interior_holes(cov, a_min)
    assert got == want


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_region_invariants(seed):
    rng = np.random.default_rng(seed)
    cov = random_covered(rng, (30, 30))
    for r in find_hole_regions(cov, 1):
        p = r.pixels
        assert not cov[p[:, 1], p[:, 0]].any()
        assert p[:, 0].min() > 0 and p[:, 1].min() > 0
        assert p[:, 0].max() < 29 and p[:, 1].max() < 29
        c = trace_contour(r)
        steps = np.abs(np.diff(np.vstack([c, c[:1]]), axis=0)).max(axis=1)
        assert len(c) == 1 or (steps == 1).all()
        # every contour vertex is a region pixel next to a non-region pixel
        region = as_set(p)
        for x, y in c.tolist():
            assert (x, y) in region
            assert any((x + dx, y + dy) not in region for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)))


def test_trace_3x3_block():
    pix = np.array([[x, y] for y in range(5, 8) for x in range(2, 5)])
    c = trace_contour(pix)
    assert c.tolist() == [[2, 5], [3, 5], [4, 5], [4, 6], [4, 7], [3, 7], [2, 7], [2, 6]]
    perimeter = {(x, y) for x, y in pix.tolist() if x in (2, 4) or y in (5, 7)}
    assert as_set(c) == perimeter
    assert signed_area(c) > 0


def test_trace_single_pixel_and_determinism():
    assert trace_contour(np.array([[7, 9]])).tolist() == [[7, 9]]
    pix = np.array([[1, 1], [2, 1], [2, 2], [3, 2], [3, 3]])
    assert np.array_equal(trace_contour(pix), trace_contour(pix[::-1]))


def test_trace_encloses_region_pixels():
    yy, xx = np.mgrid[0:40, 0:40]
    blob = (xx - 20) ** 2 + (yy - 18) ** 2 <= 100
    blob |= (xx >= 20) & (xx < 32) & (yy >= 15) & (yy < 19)
    pix = np.column_stack([xx[blob], yy[blob]])
    c = trace_contour(pix)
    on_contour = as_set(c)
    interior = np.array([p for p in pix.tolist() if tuple(p) not in on_contour], dtype=float)
    assert point_in_polygon(interior, c).all()
    assert signed_area(c) > 0


def test_trace_empty_raises():
    with pytest.raises(ValueError):
        trace_contour(np.zeros((0, 2)))


def test_planted_voids_recovered():
    t, p = generate_topology(500, 6, seed=21)
    tr = fit_transform(p.positions)
    ann = detect_holes(render_coverage(p.positions, tr, p.sensing_range))
    assert len(ann.holes) == 3
    centers = tr.apply([v.center for v in p.voids])
    radii = [v.radius * tr.scale for v in p.voids]
    for h in ann.holes:
        cen = h.pixels.mean(axis=0)
        assert any(np.hypot(*(cen - c)) < r for c, r in zip(centers, radii))


def test_dense_layout_without_voids_is_empty():
    t, p = generate_topology(500, 8, HoleSpec(count=0), seed=3)
    tr = fit_transform(p.positions)
    img = render_coverage(p.positions, tr, p.sensing_range)
    assert detect_holes(img).holes == []
    assert interior_holes(img.coverage[::4, ::4], 25) == []


def test_annotation_round_trip(tmp_path):
    t, p = generate_topology(300, 6, seed=5)
    tr = fit_transform(p.positions)
    img = render_coverage(p.positions, tr, p.sensing_range)
    a = detect_holes(img, image_path="coverage.png")
    b = detect_holes(img, image_path="coverage.png")
    assert a.to_json() == b.to_json()
    a.holes[0].boundary_node_ids = (9, 2, 5)
    a.save(tmp_path / "a.json")
    data = json.loads((tmp_path / "a.json").read_text())
    assert data["imageWidth"] == 1024 and data["imageHeight"] == 1024
    assert data["imagePath"] == "coverage.png"
    shape = data["shapes"][0]
    assert shape["label"] == "hole" and shape["shape_type"] == "polygon"
    assert shape["boundary_node_ids"] == [2, 5, 9]
    back = Annotation.load(tmp_path / "a.json")
    assert len(back.holes) == len(a.holes)
    np.testing.assert_array_equal(back.holes[0].contour, a.holes[0].contour)
    assert back.to_json() == Annotation.from_dict(data).to_json()


def test_annotation_rejects_garbage():
    with pytest.raises(ValueError):
        Annotation.from_dict({"shapes": []})
    with pytest.raises(ValueError):
        Annotation.from_dict({"imageWidth": 4, "imageHeight": 4,
                              "shapes": [{"label": "hole", "shape_type": "circle", "points": []}]})


def test_empty_annotation_json():
    ann = Annotation(10, 10)
    assert json.loads(ann.to_json())["shapes"] == []
