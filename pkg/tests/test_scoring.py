import math
from types import SimpleNamespace

import numpy as np
import pytest

from stloc.errors import DataError
from stloc.flow import FlowField, flow_to_image
from stloc.geometry import BoundingBox, Track, box_iou
from stloc.proposals import ProposalSet
from stloc.scoring import (PrecomputedScores, ScoreLookupError, ScorerConfig, VideoFeatures, action_training_sets,
                           negative_mask, region_feature, score_region, train_action_classifiers)
from stloc.svm import ClassifierBank, LinearModel
from stloc.video import Frame, VideoSequence


def brute_hist(img, nbins=8):
    """Magnitude-weighted signed orientation histogram with linear bin split, per pixel loop."""
    g = img.astype(float)
    h, w = g.shape
    out = np.zeros(nbins)
    for r in range(h):
        for c in range(w):
            gx = 0.5 * (g[r, min(c + 1, w - 1)] - g[r, max(c - 1, 0)])
            gy = 0.5 * (g[min(r + 1, h - 1), c] - g[max(r - 1, 0), c])
            m = math.hypot(gx, gy)
            if m == 0:
                continue
            pos = (math.atan2(gy, gx) % (2 * math.pi)) / (2 * math.pi / nbins)
            k = int(math.floor(pos)) % nbins
            f = pos - math.floor(pos)
            out[k] += m * (1 - f)
            out[(k + 1) % nbins] += m * f
    return out


def noisy(rng, size=32):
    return Frame(rng.integers(20, 230, (size, size), dtype=np.uint8))


def test_default_dimension():
    assert ScorerConfig().dim == 256
    assert ScorerConfig(motion=False).dim == 128
    with pytest.raises(ValueError):
        ScorerConfig(bins=1)


def test_region_feature_matches_brute_force(rng):
    f = noisy(rng)
    cfg = ScorerConfig(grid=1, motion=False, patch=32)
    got = region_feature(f, None, BoundingBox(0, 0, 32, 32), cfg)
    ref = brute_hist(f.data)
    assert np.allclose(got, ref / np.linalg.norm(ref), atol=1e-12)


def test_constant_patch_constant_flow():
    f = Frame(np.full((32, 32), 100, np.uint8))
    flow_img = flow_to_image(FlowField(np.ones((32, 32)), np.zeros((32, 32))))
    feat = region_feature(f, flow_img, BoundingBox(4, 4, 20, 20), ScorerConfig(patch=32))
    app, mot = feat[:128], feat[128:].reshape(4, 4, 8)
    assert (app == 0).all()
    assert np.allclose(mot[..., 0], 0.25) and np.allclose(mot[..., 1:], 0)


def test_rotating_edge_shifts_bins_by_two():
    img = np.full((32, 32), 40, np.uint8)
    img[:, 13:] = 200  # single vertical edge, gradient along +x
    cfg = ScorerConfig(grid=4, motion=False, patch=32)
    box = BoundingBox(0, 0, 32, 32)
    a = region_feature(Frame(img), None, box, cfg).reshape(4, 4, 8)
    b = region_feature(Frame(np.ascontiguousarray(np.rot90(img))), None, box, cfg).reshape(4, 4, 8)
    assert a[..., 0].sum() > 0 and np.allclose(a[..., 1:], 0)
    # rot90 maps (gx, gy) to (gy, -gx): angle -90 degrees, cells rotate with the image
    assert np.allclose(b, np.roll(np.rot90(a, axes=(0, 1)), -2, axis=-1))


def test_brightness_shift_invariance(rng):
    data = rng.integers(0, 200, (32, 32), dtype=np.uint8)
    flow_img = flow_to_image(FlowField(rng.normal(size=(32, 32)), rng.normal(size=(32, 32))))
    cfg = ScorerConfig(patch=32)
    box = BoundingBox(0, 0, 32, 32)
    a = region_feature(Frame(data), flow_img, box, cfg)
    b = region_feature(Frame(data + 10), flow_img, box, cfg)
    assert np.allclose(a, b, atol=1e-6)


def test_feature_norms_and_video_route_agreement(rng):
    frames = tuple(noisy(rng) for _ in range(3))
    flows = [FlowField(rng.normal(size=(32, 32)), rng.normal(size=(32, 32))) for _ in range(2)]
    video = VideoSequence(frames)
    cfg = ScorerConfig(patch=32)
    vf = VideoFeatures(video, flows, cfg)
    full = vf.features(2, [BoundingBox(0, 0, 32, 32)])[0]
    assert np.allclose(full, region_feature(frames[1], vf.flow_image(2), BoundingBox(0, 0, 32, 32), cfg), atol=1e-12)
    boxes = np.column_stack([rng.uniform(-5, 25, (50, 2)), rng.uniform(2, 20, (50, 2))])
    X = vf.features(3, boxes)
    assert np.allclose(np.linalg.norm(X, axis=1), 1.0, atol=1e-6)
    with pytest.raises(ValueError):
        vf.features(1, [BoundingBox(40, 40, 5, 5)])
    with pytest.raises(ValueError):
        region_feature(frames[0], None, BoundingBox(40, 0, 3, 3), cfg)


def test_score_region_examples():
    bank = ClassifierBank({"a": LinearModel(np.zeros(4), 0.3), "b": LinearModel(np.array([1.0, 0, 0, 0]), 0.0),
                           "c": LinearModel(np.array([-1.0, 0, 0, 0]), 0.0)})
    assert score_region(bank, "a", np.ones(4)) == pytest.approx(0.3)
    x = np.array([1.0, 0, 0, 0])

    def best(f):
        return max(["b", "c"], key=lambda c: score_region(bank, c, f))

    assert best(x) == "b" and best(-x) == "c"
    with pytest.raises(KeyError):
        score_region(bank, "zz", x)


def shifted_for_iou(r):
    # (x, 0, 10, 10) against (0, 0, 10, 10): overlap width = 20 r / (1 + r)
    return 10 - 20 * r / (1 + r)


def one_frame_item(rng, proposals, label="a"):
    video = VideoSequence((noisy(rng),))
    return SimpleNamespace(features=VideoFeatures(video, [], ScorerConfig()),
                           gts=[Track(label, 1, [BoundingBox(0, 0, 10, 10)])],
                           proposals=[proposals])


def test_thirty_percent_rule(rng):
    gt = BoundingBox(0, 0, 10, 10)
    b29 = BoundingBox(shifted_for_iou(0.29), 0, 10, 10)
    b31 = BoundingBox(shifted_for_iou(0.31), 0, 10, 10)
    assert box_iou(b29, gt) == pytest.approx(0.29, abs=1e-12)
    assert box_iou(b31, gt) == pytest.approx(0.31, abs=1e-12)
    arr = np.array([b29.as_tuple(), b31.as_tuple()])
    assert negative_mask(arr, np.array([gt.as_tuple()])).tolist() == [True, False]
    item = one_frame_item(rng, ProposalSet.from_arrays(1, arr, [1.0, 0.5]))
    sets = action_training_sets([item], ["a"])
    P, N = sets["a"]
    assert len(P) == 1 and len(N) == 1
    assert np.allclose(N[0], item.features.features(1, [b29])[0])


def test_pool_never_overlaps_ground_truth(drift_item):
    from stloc.scoring import NegativeSampling, gt_boxes_at
    from stloc.geometry import iou_matrix
    rng = np.random.default_rng([0, 0])
    s = NegativeSampling()
    for t in range(1, len(drift_item.video) + 1, s.frame_stride):
        boxes = drift_item.proposals[t - 1].box_array()
        pick = np.sort(rng.choice(len(boxes), size=min(s.per_frame, len(boxes)), replace=False))
        keep = negative_mask(boxes[pick], gt_boxes_at(drift_item.gts, "drift", t))
        assert (iou_matrix(boxes[pick][keep], gt_boxes_at(drift_item.gts, "drift", t)) < 0.3).all()


def test_video_without_proposals_contributes_nothing(rng):
    far = ProposalSet.from_arrays(1, np.array([[20, 20, 8, 8]]), [1.0])
    with_props = one_frame_item(rng, far)
    empty = one_frame_item(rng, ProposalSet(1))
    sets = action_training_sets([with_props, empty], ["a"])
    assert len(sets["a"][0]) == 2 and len(sets["a"][1]) == 1
    bank = train_action_classifiers([with_props, empty], ["a"])
    assert bank.classes == ["a"]


def test_class_without_positives_is_named(rng):
    item = one_frame_item(rng, ProposalSet.from_arrays(1, np.array([[20, 20, 8, 8]]), [1.0]))
    with pytest.raises(DataError, match="'b'"):
        train_action_classifiers([item], ["a", "b"])
    with pytest.raises(DataError, match="'a'"):
        train_action_classifiers([item], ["b"])


def test_trained_classifier_prefers_actor(drift_bank, drift_item):
    rng = np.random.default_rng(5)
    g = drift_item.gts[0]
    wins = total = 0
    for t in range(1, len(drift_item.video) + 1):
        gt = g.box_at(t)
        for _ in range(5):
            while True:
                b = BoundingBox(rng.integers(0, 48), rng.integers(0, 48), 16, 16)
                if box_iou(b, gt) < 0.3:
                    break
            X = drift_item.features.features(t, [gt, b])
            s = drift_bank.model("drift").decision(X)
            wins += s[0] > s[1]
            total += 1
    assert wins / total >= 0.9


def test_precomputed_scores(tmp_path):
    p = tmp_path / "s.txt"
    p.write_text("# comment\nv1 3 0 run 0.75\n")
    tab = PrecomputedScores.load(p)
    assert tab.lookup("v1", 3, 0, "run") == 0.75
    with pytest.raises(ScoreLookupError, match="frame=4"):
        tab.lookup("v1", 4, 0, "run")
    p.write_text("v1 3 0 run 0.75\nv1 3 0 run 0.5\n")
    with pytest.raises(DataError, match=":2:"):
        PrecomputedScores.load(p)
    p.write_text("v1 3 0 run\n")
    with pytest.raises(DataError, match=":1:"):
        PrecomputedScores.load(p)
