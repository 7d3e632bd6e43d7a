import numpy as np
import pytest

from stloc.errors import DataError
from stloc.proposals import (DEFAULT_CAP, Proposal, ProposalSet, grid_boxes, grid_proposals, load_proposals,
                             proposal_path, write_proposals)
from stloc.geometry import BoundingBox
from stloc.video import Frame


def write_rows(path, rows):
    path.write_text("".join(" ".join(str(v) for v in r) + "\n" for r in rows))


def test_load_caps_at_256(tmp_path, rng):
    obj = rng.permutation(300).astype(float)
    rows = [(i % 50, i % 40, 5, 6, obj[i]) for i in range(300)]
    write_rows(tmp_path / "p.txt", rows)
    ps = load_proposals(tmp_path / "p.txt", 1)
    assert DEFAULT_CAP == 256 and len(ps) == 256
    assert sorted(ps.objectness.tolist(), reverse=True) == ps.objectness.tolist()
    assert set(ps.objectness.tolist()) == set(range(44, 300))


def test_load_under_cap_and_ties_keep_file_order(tmp_path):
    rows = [(i, 0, 3, 3, 1.0 if i % 2 else 2.0) for i in range(10)]
    write_rows(tmp_path / "p.txt", rows)
    ps = load_proposals(tmp_path / "p.txt", 4)
    assert len(ps) == 10 and ps.t == 4
    assert [p.box.x for p in ps] == [0, 2, 4, 6, 8, 1, 3, 5, 7, 9]


def test_load_errors(tmp_path):
    p = tmp_path / "p.txt"
    write_rows(p, [(0, 0, 3, 3, 1.0), (0, 0, 0, 4, 1.0)])
    with pytest.raises(DataError, match=":2:"):
        load_proposals(p, 1)
    write_rows(p, [(0, 0, 3, 1.0)])
    with pytest.raises(DataError, match=":1:"):
        load_proposals(p, 1)
    write_rows(p, [(100, 0, 3, 3, 1.0)])
    with pytest.raises(DataError, match="outside"):
        load_proposals(p, 1, 64, 64)
    with pytest.raises(DataError):
        load_proposals(tmp_path / "missing.txt", 1)


def test_write_load_roundtrip(tmp_path):
    ps = ProposalSet.ranked(3, [Proposal(BoundingBox(1, 2, 3, 4), 0.5, 3), Proposal(BoundingBox(5, 6, 7, 8), 0.9, 3)])
    write_proposals(ps, proposal_path(tmp_path, 3))
    assert proposal_path(tmp_path, 3).name == "props_000003.txt"
    assert load_proposals(proposal_path(tmp_path, 3), 3) == ps


def test_grid_single_full_frame_box():
    f = Frame(np.zeros((20, 20), np.uint8))
    ps = grid_proposals(f, 1, scales=(1.0,), ratios=(1.0,))
    assert len(ps) == 1 and ps[0].box == BoundingBox(0, 0, 20, 20)


def test_grid_constant_frame_keeps_generation_order():
    f = Frame(np.full((64, 64), 50, np.uint8))
    ps = grid_proposals(f, 1)
    assert (ps.objectness == ps.objectness[0]).all()
    assert np.array_equal(ps.box_array(), grid_boxes(64, 64)[:256])


def brute_mean_gradient(img, box):
    g = img.astype(float)
    p = np.pad(g, 1, mode="edge")
    gx = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
    gy = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
    x, y, w, h = (int(v) for v in box)
    return np.hypot(gx, gy)[y:y + h, x:x + w].mean()


def test_grid_aligned_square_ranks_first():
    img = np.full((64, 64), 40, np.uint8)
    img[16:32, 32:48] = 220
    f = Frame(img)
    ps = grid_proposals(f, 1, scales=(0.25,), ratios=(1.0,), stride=0.25)
    boxes = grid_boxes(64, 64, (0.25,), (1.0,), 0.25)
    brute = np.array([brute_mean_gradient(img, b) for b in boxes])
    assert np.allclose(np.sort(brute)[::-1][:len(ps)], ps.objectness)
    assert tuple(ps[0].box.as_tuple()) == tuple(boxes[int(np.argmax(brute))])
    assert ps[0].box == BoundingBox(32, 16, 16, 16)


def test_grid_boxes_positive_area_and_cap(rng):
    f = Frame(rng.integers(0, 256, (48, 80), dtype=np.uint8))
    ps = grid_proposals(f, 2)
    assert len(ps) <= 256
    arr = ps.box_array()
    assert (arr[:, 2] > 0).all() and (arr[:, 3] > 0).all()
    assert (arr[:, 0] + arr[:, 2] <= 80).all() and (arr[:, 1] + arr[:, 3] <= 48).all()
    with pytest.raises(ValueError):
        grid_boxes(10, 10, scales=())


def test_proposal_set_select_and_equality():
    ps = ProposalSet.from_arrays(1, np.array([[0, 0, 2, 2], [1, 1, 2, 2]]), np.array([2.0, 1.0]))
    sub = ps.select(np.array([False, True]))
    assert len(sub) == 1 and sub[0].box == BoundingBox(1, 1, 2, 2)
    assert ps == ProposalSet.from_arrays(1, ps.box_array(), ps.objectness)
