import numpy as np
import pytest
from hypothesis import given, strategies as st

from stloc.geometry import BoundingBox, Track, box_iou, cell_edges, iou_matrix, pixel_bounds_array


def raster_iou(a, b, size=40):
    """Pixel-counting IoU of integer boxes."""
    ma = np.zeros((size, size), bool)
    mb = np.zeros((size, size), bool)
    ma[int(a.y):int(a.y2), int(a.x):int(a.x2)] = True
    mb[int(b.y):int(b.y2), int(b.x):int(b.x2)] = True
    union = (ma | mb).sum()
    return (ma & mb).sum() / union


def test_iou_examples():
    a = BoundingBox(0, 0, 10, 10)
    assert box_iou(a, a) == 1.0
    assert box_iou(a, BoundingBox(20, 20, 5, 5)) == 0.0
    assert box_iou(a, BoundingBox(5, 0, 10, 10)) == pytest.approx(1 / 3, abs=1e-15)


def test_iou_matches_pixel_count_on_random_integer_boxes():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        x1, y1, x2, y2 = rng.integers(0, 20, 4)
        w1, h1, w2, h2 = rng.integers(1, 20, 4)
        a, b = BoundingBox(x1, y1, w1, h1), BoundingBox(x2, y2, w2, h2)
        assert box_iou(a, b) == raster_iou(a, b)


boxes = st.builds(BoundingBox, st.integers(-20, 40), st.integers(-20, 40), st.integers(1, 30), st.integers(1, 30))


@given(boxes, boxes)
def test_iou_symmetric_and_bounded(a, b):
    v = box_iou(a, b)
    assert v == box_iou(b, a)
    assert 0.0 <= v <= 1.0


def test_iou_matrix_agrees_with_scalar(rng):
    A = np.column_stack([rng.uniform(0, 30, (20, 2)), rng.uniform(1, 20, (20, 2))])
    B = np.column_stack([rng.uniform(0, 30, (15, 2)), rng.uniform(1, 20, (15, 2))])
    M = iou_matrix(A, B)
    for i in range(20):
        for j in range(15):
            assert M[i, j] == pytest.approx(box_iou(BoundingBox(*A[i]), BoundingBox(*B[j])), abs=1e-12)


def test_box_rejects_nonpositive_size():
    with pytest.raises(ValueError):
        BoundingBox(0, 0, 0, 5)
    with pytest.raises(ValueError):
        BoundingBox(0, 0, 5, -1)


def test_pixel_bounds_integer_box_covers_w_times_h():
    c0, r0, c1, r1 = BoundingBox(3, 4, 5, 6).pixel_bounds(64, 64)
    assert (c1 - c0) * (r1 - r0) == 30


def test_pixel_bounds_clip_and_never_empty():
    assert BoundingBox(-5, -5, 6, 6).pixel_bounds(10, 10) == (0, 0, 1, 1)
    assert BoundingBox(9.9, 9.9, 0.05, 0.05).pixel_bounds(10, 10)[2:] == (10, 10)
    with pytest.raises(ValueError):
        BoundingBox(10, 0, 2, 2).pixel_bounds(10, 10)
    arr = pixel_bounds_array(np.array([[3, 4, 5, 6], [-5, -5, 6, 6]]), 64, 64)
    assert arr.tolist() == [[3, 4, 8, 10], [0, 0, 1, 1]]


def test_cell_edges_remainder_to_last_cell():
    e = cell_edges(np.array([0]), np.array([10]), 3)
    assert e.tolist() == [[0, 3, 6, 10]]


def test_track_ranges_and_segment():
    tr = Track("a", 3, [BoundingBox(k, 0, 2, 2) for k in range(5)])
    assert (tr.start, tr.end, len(tr)) == (3, 7, 5)
    assert tr.box_at(5).x == 2
    seg = tr.segment(4, 6)
    assert (seg.start, seg.end) == (4, 6) and seg.box_at(4) == tr.box_at(4)
    with pytest.raises(KeyError):
        tr.box_at(8)
    with pytest.raises(ValueError):
        tr.segment(2, 4)
    with pytest.raises(ValueError):
        Track("a", 1, [])
