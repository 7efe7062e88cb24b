import numpy as np
from hypothesis import given, settings, strategies as st
from scipy import ndimage

from oracles import naive_point_to_polyline
from wsnholes.detect import trace_contour
from wsnholes.geometry import distance_to_polyline, point_in_polygon, polygon_pixels, signed_area

SQUARE = np.array([[0, 0], [4, 0], [4, 4], [0, 4]])


def test_distance_examples():
    d = distance_to_polyline([[2, -3], [2, 2], [6, 6], [0, 0]], SQUARE)
    np.testing.assert_allclose(d, [3, 2, np.hypot(2, 2), 0])


def test_distance_single_vertex():
    assert distance_to_polyline([[3, 4]], [[0, 0]])[0] == 5.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_distance_matches_naive(seed):
    rng = np.random.default_rng(seed)
    contour = rng.integers(0, 20, size=(int(rng.integers(1, 12)), 2))
    pts = rng.uniform(-5, 25, size=(20, 2))
    got = distance_to_polyline(pts, contour, chunk=7)
    want = [naive_point_to_polyline(p, contour) for p in pts]
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_point_in_polygon():
    inside = point_in_polygon([[2, 2], [5, 2], [-1, 1], [3.9, 0.5]], SQUARE)
    assert inside.tolist() == [True, False, False, True]


def test_signed_area_orientation():
    assert signed_area(SQUARE) == 16.0
    assert signed_area(SQUARE[::-1]) == -16.0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_polygon_pixels_refills_traced_region(seed):
    rng = np.random.default_rng(seed)
    labels, k = ndimage.label(rng.random((14, 14)) < 0.6)
    if k == 0:
        return
    biggest = np.argmax(np.bincount(labels.ravel())[1:]) + 1
    region = ndimage.binary_fill_holes(labels == biggest)
    ys, xs = np.nonzero(region)
    pix = np.column_stack([xs, ys])
    got = polygon_pixels(trace_contour(pix))
    assert {tuple(p) for p in got.tolist()} == {tuple(p) for p in pix.tolist()}
