from dataclasses import replace

import numpy as np
import pytest

from stloc.errors import DataError
from stloc.geometry import BoundingBox, box_iou
from stloc.synth import SceneSpec, synth_scene
from stloc.video import Frame, VideoSequence, crop_resize, load_sequence, save_sequence, write_frame


def test_frame_invariants():
    assert Frame(np.zeros((3, 4), np.uint8)).width == 4
    assert Frame(np.zeros((3, 4, 3), np.uint8)).channels == 3
    with pytest.raises(ValueError):
        Frame(np.zeros((3, 4), np.float32))
    with pytest.raises(ValueError):
        Frame(np.zeros((3, 4, 2), np.uint8))
    with pytest.raises(ValueError):
        Frame(np.zeros((0, 4), np.uint8))


def test_luma_formula():
    px = np.array([[[200, 100, 50]]], np.uint8)
    assert Frame(px).luma()[0, 0] == round(0.299 * 200 + 0.587 * 100 + 0.114 * 50)


def test_sequence_requires_uniform_frames():
    with pytest.raises(ValueError):
        VideoSequence((Frame(np.zeros((8, 8), np.uint8)), Frame(np.zeros((9, 8), np.uint8))))
    with pytest.raises(ValueError):
        VideoSequence(())


def test_load_three_frames(tmp_path, rng):
    frames = tuple(Frame(rng.integers(0, 256, (8, 8), dtype=np.uint8)) for _ in range(3))
    save_sequence(VideoSequence(frames, "x"), tmp_path)
    v = load_sequence(tmp_path)
    assert len(v) == 3
    assert all(a == b for a, b in zip(v.frames, frames))


def test_load_mixed_dimensions(tmp_path):
    write_frame(Frame(np.zeros((8, 8), np.uint8)), tmp_path / "frame_000001.pgm")
    write_frame(Frame(np.zeros((9, 8), np.uint8)), tmp_path / "frame_000002.pgm")
    with pytest.raises(DataError, match="frame_000002"):
        load_sequence(tmp_path)


def test_load_empty_and_missing(tmp_path):
    with pytest.raises(DataError):
        load_sequence(tmp_path)
    with pytest.raises(DataError):
        load_sequence(tmp_path / "nope")


def test_load_rejects_gaps_and_unreadable(tmp_path):
    write_frame(Frame(np.zeros((4, 4), np.uint8)), tmp_path / "frame_000001.pgm")
    write_frame(Frame(np.zeros((4, 4), np.uint8)), tmp_path / "frame_000003.pgm")
    with pytest.raises(DataError, match="contiguous"):
        load_sequence(tmp_path)
    (tmp_path / "frame_000002.pgm").write_bytes(b"garbage")
    with pytest.raises(DataError, match="frame_000002"):
        load_sequence(tmp_path)


def test_crop_identity_is_bitwise(rng):
    f = Frame(rng.integers(0, 256, (12, 17), dtype=np.uint8))
    assert crop_resize(f, BoundingBox(0, 0, 17, 12), 17, 12) == f
    rgb = Frame(rng.integers(0, 256, (5, 6, 3), dtype=np.uint8))
    assert crop_resize(rgb, BoundingBox(0, 0, 6, 5), 6, 5) == rgb


def test_crop_constant_frame(rng):
    f = Frame(np.full((10, 10), 77, np.uint8))
    for _ in range(10):
        x, y = rng.uniform(-3, 8, 2)
        out = crop_resize(f, BoundingBox(x, y, 4.3, 6.1), 7, 5)
        assert out.width == 7 and out.height == 5
        assert (out.data == 77).all()


def test_crop_checkerboard_hand_bilinear():
    board = np.array([[0, 200], [200, 0]], np.uint8)
    out = crop_resize(Frame(board), BoundingBox(0, 0, 2, 2), 4, 4).data

    def interp(y, x):
        # independent bilinear interpolant of the 2x2 board (edge-clamped)
        y, x = min(max(y, 0.0), 1.0), min(max(x, 0.0), 1.0)
        return (board[0, 0] * (1 - x) * (1 - y) + board[0, 1] * x * (1 - y)
                + board[1, 0] * (1 - x) * y + board[1, 1] * x * y)

    for i in range(4):
        for j in range(4):
            ys, xs = (i + 0.5) * 0.5 - 0.5, (j + 0.5) * 0.5 - 0.5
            assert out[i, j] == int(np.floor(interp(ys, xs) + 0.5))


def test_crop_edge_replication_and_outside():
    f = Frame(np.tile(np.arange(10, dtype=np.uint8) * 20, (4, 1)))
    out = crop_resize(f, BoundingBox(-4, 0, 4.5, 4), 4, 4)
    assert (out.data == 0).all()
    with pytest.raises(ValueError):
        crop_resize(f, BoundingBox(10, 0, 3, 3), 3, 3)


def test_synth_deterministic():
    spec = SceneSpec(motion="hosc", num_frames=12)
    a, ga, _, _ = synth_scene(spec, 7)
    b, gb, _, _ = synth_scene(spec, 7)
    assert all(x == y for x, y in zip(a.frames, b.frames))
    assert ga.boxes == gb.boxes
    c, _, _, _ = synth_scene(spec, 8)
    assert not all(x == y for x, y in zip(a.frames, c.frames))


def test_synth_static_program_constant_boxes():
    _, g, _, _ = synth_scene(SceneSpec(motion="flicker", num_frames=10), 0)
    assert len(set(g.boxes)) == 1


def test_synth_drift_shift():
    _, g, label, ext = synth_scene(SceneSpec(label="d", motion="drift", vx=2, vy=1, num_frames=15), 0)
    assert label == "d" and ext == (1, 15)
    for t in range(1, 15):
        a, b = g.box_at(t), g.box_at(t + 1)
        assert (b.x - a.x, b.y - a.y) == (2.0, 1.0)


@pytest.mark.parametrize("motion", ["hosc", "vosc", "drift", "flicker"])
def test_synth_adjacent_gt_overlap(motion):
    _, g, _, _ = synth_scene(SceneSpec(motion=motion, num_frames=30), 3)
    for t in range(g.start, g.end):
        assert box_iou(g.box_at(t), g.box_at(t + 1)) > 0


def test_synth_extent_and_absence():
    spec = SceneSpec(motion="drift", num_frames=20, t_b=6, t_e=12, noise=0)
    v, g, _, ext = synth_scene(spec, 0)
    assert ext == (6, 12) and (g.start, g.end) == (6, 12)
    # outside the extent only the static background is rendered
    assert v[1] == v[5] == v[20]
    assert not v[6] == v[1]


def test_synth_errors_and_spec_text():
    with pytest.raises(ValueError):
        synth_scene(SceneSpec(actor_w=80), 0)
    with pytest.raises(ValueError):
        synth_scene(SceneSpec(t_b=5, t_e=3), 0)
    s = replace(SceneSpec(), motion="vosc", amplitude=7.5, label="zz")
    assert SceneSpec.from_text(s.to_text()) == s
    with pytest.raises(DataError, match="bogus"):
        SceneSpec.from_text("bogus=1\n")
