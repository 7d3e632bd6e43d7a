import numpy as np
import pytest

from stloc.errors import DataError
from stloc.flow import (FlowField, FlowParams, estimate_flow, flow_to_image, median_shift, read_flow,
                        video_flows, write_flow, per_frame_flows)
from stloc.geometry import BoundingBox
from stloc.synth import value_noise
from stloc.video import Frame, VideoSequence


def texture(seed=0, size=64):
    rng = np.random.default_rng(seed)
    img = 128 + 60 * value_noise(size, size, 4.0, rng) + 30 * value_noise(size, size, 2.0, rng)
    return np.clip(img, 0, 255)


def pair(dx, dy, seed=0):
    src = texture(seed)
    a = Frame(np.floor(src + 0.5).astype(np.uint8))
    b = Frame(np.floor(np.roll(src, (dy, dx), axis=(0, 1)) + 0.5).astype(np.uint8))
    return a, b


def central_mean(x):
    h, w = x.shape
    return float(x[h // 4:3 * h // 4, w // 4:3 * w // 4].mean())


def test_identical_frames_zero_flow():
    a, _ = pair(0, 0)
    f = estimate_flow(a, a)
    assert np.abs(f.u).max() <= 0.05 and np.abs(f.v).max() <= 0.05


def test_translation_recovered():
    a, b = pair(2, 0)
    f = estimate_flow(a, b)
    assert central_mean(f.u) == pytest.approx(2.0, abs=0.5)
    assert abs(central_mean(f.v)) <= 0.5


def test_textureless_frames_zero_flow():
    a = Frame(np.full((32, 32), 90, np.uint8))
    f = estimate_flow(a, a)
    assert np.abs(f.u).max() < 1e-9 and np.abs(f.v).max() < 1e-9


def test_swap_negates_flow():
    a, b = pair(-2, 1, seed=3)
    fwd, bwd = estimate_flow(a, b), estimate_flow(b, a)
    assert central_mean(fwd.u) == pytest.approx(-central_mean(bwd.u), abs=0.5)
    assert central_mean(fwd.v) == pytest.approx(-central_mean(bwd.v), abs=0.5)


def test_flow_deterministic_and_shape_checks():
    a, b = pair(1, 1)
    assert estimate_flow(a, b) == estimate_flow(a, b)
    with pytest.raises(ValueError):
        estimate_flow(a, Frame(np.zeros((10, 10), np.uint8)))
    with pytest.raises(ValueError):
        FlowParams(alpha=0)
    with pytest.raises(ValueError):
        FlowParams(scale=1.0)
    with pytest.raises(ValueError):
        FlowField(np.array([[np.nan]]), np.array([[0.0]]))


def test_flow_image_encoding():
    img = flow_to_image(FlowField.zeros(2, 3)).data
    assert (img[..., 0] == 128).all() and (img[..., 1] == 128).all() and (img[..., 2] == 0).all()
    one = flow_to_image(FlowField(np.ones((1, 1)), np.zeros((1, 1)))).data[0, 0]
    assert tuple(one) == (144, 128, 16)
    big = flow_to_image(FlowField(np.full((1, 1), 100.0), np.zeros((1, 1)))).data[0, 0]
    assert big[0] == 255 and big[2] == 255
    neg = flow_to_image(FlowField(np.full((1, 1), -100.0), np.zeros((1, 1)))).data[0, 0]
    assert neg[0] == 0


def test_flow_image_monotone():
    u = np.linspace(-8, 7.9, 200).reshape(1, -1)
    img = flow_to_image(FlowField(u, np.zeros_like(u))).data
    assert (np.diff(img[0, :, 0].astype(int)) >= 0).all()
    assert (np.diff(img[0, 100:, 2].astype(int)) >= 0).all()


def test_median_shift_examples():
    f = FlowField(np.full((10, 10), 3.0), np.full((10, 10), -1.0))
    assert median_shift(f, BoundingBox(2, 2, 5, 5)) == (3.0, -1.0)
    u = np.zeros((10, 10))
    u[:6] = 5.0  # 60% of the box rows
    assert median_shift(FlowField(u, np.zeros_like(u)), BoundingBox(0, 0, 10, 10))[0] == 5.0
    u = np.zeros((4, 4))
    u[0, 0], u[0, 1], u[1, 0], u[1, 1] = 1, 2, 3, 4
    assert median_shift(FlowField(u, np.zeros_like(u)), BoundingBox(0, 0, 2, 2))[0] == 2.0
    with pytest.raises(ValueError):
        median_shift(f, BoundingBox(20, 20, 3, 3))


def test_median_shift_permutation_invariant(rng):
    u = rng.normal(size=(6, 6))
    v = rng.normal(size=(6, 6))
    perm = rng.permutation(36)
    a = median_shift(FlowField(u, v), BoundingBox(0, 0, 6, 6))
    b = median_shift(FlowField(u.ravel()[perm].reshape(6, 6), v.ravel()[perm].reshape(6, 6)), BoundingBox(0, 0, 6, 6))
    assert a == b


def test_flow_file_roundtrip_and_header(tmp_path, rng):
    f = FlowField(rng.normal(size=(3, 5)), rng.normal(size=(3, 5)))
    p = tmp_path / "f.stfl"
    write_flow(f, p)
    raw = p.read_bytes()
    assert raw[:4] == b"STFL" and int.from_bytes(raw[4:8], "little") == 5 and int.from_bytes(raw[8:12], "little") == 3
    assert len(raw) == 12 + 2 * 4 * 15
    assert read_flow(p) == f
    p.write_bytes(raw[:-4])
    with pytest.raises(DataError):
        read_flow(p)


def test_video_flows_cache_transparent(tmp_path):
    a, b = pair(1, 0)
    v = VideoSequence((a, b, a), "vid")
    p = FlowParams(iterations=20)
    first = video_flows(v, p, tmp_path)
    assert len(first) == 2
    assert len(list((tmp_path / "vid").rglob("*.stfl"))) == 2
    again = video_flows(v, p, tmp_path)
    assert all(x == y for x, y in zip(first, again))
    assert all(x == y for x, y in zip(first, video_flows(v, p)))


def test_per_frame_flows_reuses_last():
    f1, f2 = FlowField.zeros(2, 2), FlowField(np.ones((2, 2)), np.ones((2, 2)))
    out = per_frame_flows([f1, f2], 3, 2, 2)
    assert out[2] is f2 and len(out) == 3
    assert per_frame_flows([], 1, 2, 2)[0] == FlowField.zeros(2, 2)
