"""Tracking-by-detection with a class-level scorer and an online instance detector.

From a seed region in frame tau the tracker walks forward to the last
frame and then backward to the first.  Each step shifts the previous box by
the median flow, scans a scale/offset neighbourhood around it, and keeps the
candidate maximising ``S_inst + S_class``.  The instance detector is a linear
SVM over the same region features, warm-started every step on the growing
positive set and a negative set pruned to hard negatives.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .flow import FlowField, median_shift
from .geometry import BoundingBox, Track, iou_matrix
from .proposals import ProposalSet
from .scoring import VideoFeatures
from .svm import ClassifierBank, LinearModel, SvmParams, train

TRACK_MODES = ("combined", "instance", "class")


@dataclass(frozen=True)
class NeighborhoodParams:
    rho: float = 0.1
    steps: int = 2
    scales: tuple[float, ...] = (0.8, 0.9, 1.0, 1.1, 1.2)

    def __post_init__(self):
        if self.steps < 0 or self.rho < 0:
            raise ValueError("steps and rho must be non-negative")
        if 1.0 not in self.scales:
            raise ValueError("scales must include 1.0 (the identity)")


def _half_up(x):
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5)


def neighborhood_array(box: BoundingBox, frame_w: int, frame_h: int,
                       p: NeighborhoodParams = NeighborhoodParams()) -> np.ndarray:
    """Candidate boxes around ``box`` as ``(n, 4)``, identity first, clipped to the frame."""
    dx = max(1.0, float(_half_up(p.rho * box.w)))
    dy = max(1.0, float(_half_up(p.rho * box.h)))
    ks = np.arange(-p.steps, p.steps + 1, dtype=np.float64)
    cx, cy = box.center
    sc = np.asarray(p.scales, dtype=np.float64)
    ident = sc == 1.0
    w = np.where(ident, box.w, np.maximum(1.0, _half_up(box.w * sc)))
    h = np.where(ident, box.h, np.maximum(1.0, _half_up(box.h * sc)))
    x0 = np.where(ident, box.x, _half_up(cx - w / 2))
    y0 = np.where(ident, box.y, _half_up(cy - h / 2))
    # scale-major, then dy, then dx
    S, KY, KX = np.meshgrid(np.arange(len(sc)), ks, ks, indexing="ij")
    S, KY, KX = S.ravel(), KY.ravel(), KX.ravel()
    a = np.stack([x0[S] + KX * dx, y0[S] + KY * dy, w[S], h[S]], axis=1)
    first = int(np.flatnonzero(ident[S] & (KX == 0) & (KY == 0))[0])
    a = np.concatenate([a[first:first + 1], np.delete(a, first, axis=0)])
    x1 = np.clip(a[:, 0], 0, frame_w)
    y1 = np.clip(a[:, 1], 0, frame_h)
    x2 = np.clip(a[:, 0] + a[:, 2], 0, frame_w)
    y2 = np.clip(a[:, 1] + a[:, 3], 0, frame_h)
    out = np.stack([x1, y1, x2 - x1, y2 - y1], axis=1)
    return out[(out[:, 2] > 0) & (out[:, 3] > 0)]


def neighborhood(box: BoundingBox, frame_w: int, frame_h: int,
                 p: NeighborhoodParams = NeighborhoodParams()) -> list[BoundingBox]:
    return [BoundingBox(*r) for r in neighborhood_array(box, frame_w, frame_h, p)]


@dataclass(frozen=True)
class TrackerParams:
    neighborhood: NeighborhoodParams = NeighborhoodParams()
    svm: SvmParams = SvmParams(epochs=10, rounds=1)
    update_epochs: int = 2
    neg_iou: float = 0.1
    hard_threshold: float = -1.0
    mode: str = "combined"
    restart_backward: bool = False
    fallback_negatives: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.mode not in TRACK_MODES:
            raise ValueError(f"unknown tracking mode {self.mode!r}; expected one of {TRACK_MODES}")
        if self.update_epochs < 1:
            raise ValueError("update_epochs must be >= 1")


@dataclass
class InstanceState:
    """Evolving positive/negative sets and the instance detector."""

    model: LinearModel
    pos: list[np.ndarray]
    neg: np.ndarray

    def copy(self) -> "InstanceState":
        return InstanceState(self.model, list(self.pos), self.neg.copy())

    def pos_matrix(self) -> np.ndarray:
        return np.vstack(self.pos)


class RegionScorer:
    """Class-level scores and features of arbitrary boxes of one video."""

    def __init__(self, features: VideoFeatures, bank: ClassifierBank):
        if bank.dim != features.dim:
            raise ValueError(f"bank dimension {bank.dim} does not match feature dimension {features.dim}")
        self.features = features
        self.bank = bank

    @property
    def video(self):
        return self.features.video

    def feats(self, t: int, boxes: np.ndarray) -> np.ndarray:
        return self.features.features(t, boxes)

    def class_scores(self, c: str, X: np.ndarray) -> np.ndarray:
        return self.bank.model(c).decision(X)


def _far_boxes(ref: np.ndarray, W: int, H: int, n: int, iou: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(200 * n):
        if len(out) == n:
            break
        w = int(rng.integers(1, W + 1))
        h = int(rng.integers(1, H + 1))
        b = np.array([[rng.integers(0, W - w + 1), rng.integers(0, H - h + 1), w, h]], dtype=np.float64)
        if iou_matrix(b, ref[None])[0, 0] < iou:
            out.append(b[0])
    return np.array(out, dtype=np.float64).reshape(-1, 4)


def _proposal_negatives(scorer: RegionScorer, proposals: Sequence[ProposalSet] | None, t: int,
                        box: np.ndarray, p: TrackerParams) -> np.ndarray:
    if proposals is None or t - 1 >= len(proposals) or len(proposals[t - 1]) == 0:
        return np.zeros((0, scorer.features.dim))
    boxes = proposals[t - 1].box_array()
    keep = iou_matrix(boxes, box[None])[:, 0] < p.neg_iou
    if not keep.any():
        return np.zeros((0, scorer.features.dim))
    return scorer.feats(t, boxes[keep])


def init_track(scorer: RegionScorer, R: BoundingBox, tau: int, c: str,
               proposals: Sequence[ProposalSet] | None, p: TrackerParams = TrackerParams()):
    """Refine the seed by class score and train the first instance detector.

    Returns ``(R_tau, state, s_class)``.
    """
    video = scorer.video
    W, H = video.width, video.height
    if not R.intersects(W, H):
        raise ValueError(f"seed box {R.as_tuple()} outside the {W}x{H} frame")
    cands = neighborhood_array(R, W, H, p.neighborhood)
    X = scorer.feats(tau, cands)
    s = scorer.class_scores(c, X)
    j = int(np.argmax(s))
    r_tau = cands[j]
    neg = _proposal_negatives(scorer, proposals, tau, r_tau, p)
    if len(neg) == 0:
        far = _far_boxes(r_tau, W, H, p.fallback_negatives, p.neg_iou, p.seed)
        neg = scorer.feats(tau, far)
    pos = [X[j:j + 1]]
    model = train(pos[0], neg, p.svm)
    return BoundingBox(*r_tau), InstanceState(model, pos, neg), float(s[j])


def _prior_box(flow: FlowField, box: BoundingBox, sign: float, W: int, H: int) -> BoundingBox:
    dx, dy = median_shift(flow, box)
    moved = BoundingBox(float(_half_up(box.x + sign * dx)), float(_half_up(box.y + sign * dy)), box.w, box.h)
    return moved if moved.intersects(W, H) else box


def _step(scorer: RegionScorer, c: str, t: int, prior: BoundingBox, state: InstanceState,
          proposals, p: TrackerParams):
    video = scorer.video
    cands = neighborhood_array(prior, video.width, video.height, p.neighborhood)
    X = scorer.feats(t, cands)
    s_cls = scorer.class_scores(c, X)
    s_inst = state.model.decision(X)
    if p.mode == "combined":
        total = s_inst + s_cls
    elif p.mode == "instance":
        total = s_inst
    else:
        total = s_cls
    j = int(np.argmax(total))
    box = cands[j]
    new_neg = _proposal_negatives(scorer, proposals, t, box, p)
    neg = np.vstack([state.neg, new_neg]) if len(new_neg) else state.neg
    state.pos.append(X[j:j + 1])
    if len(neg):
        # retrain on every new negative, then keep only the hard ones
        state.model = train(state.pos_matrix(), neg, p.svm, init=state.model, epochs=p.update_epochs)
        neg = neg[state.model.decision(neg) >= p.hard_threshold]
    state.neg = neg
    return BoundingBox(*box), float(s_inst[j]), float(s_cls[j])


def track(scorer: RegionScorer, R: BoundingBox, tau: int, c: str,
          proposals: Sequence[ProposalSet] | None, flows: Sequence[FlowField],
          p: TrackerParams = TrackerParams()) -> Track:
    """Track from seed ``R`` in frame ``tau`` over the whole video.

    ``flows[i - 1]`` is the flow from frame i to i + 1.
    """
    video = scorer.video
    T = len(video)
    if not 1 <= tau <= T:
        raise ValueError(f"seed frame {tau} outside 1..{T}")
    if len(flows) < T - 1:
        raise ValueError(f"need {T - 1} flows, got {len(flows)}")
    W, H = video.width, video.height
    r_tau, state, s_cls0 = init_track(scorer, R, tau, c, proposals, p)
    init_state = state.copy()
    boxes: list[BoundingBox | None] = [None] * T
    s_inst = np.zeros(T)
    s_cls = np.zeros(T)
    boxes[tau - 1] = r_tau
    s_cls[tau - 1] = s_cls0
    s_inst[tau - 1] = state.model.decision(state.pos[0])[0]

    prev = r_tau
    for i in range(tau + 1, T + 1):
        prior = _prior_box(flows[i - 2], prev, 1.0, W, H)
        prev, s_inst[i - 1], s_cls[i - 1] = _step(scorer, c, i, prior, state, proposals, p)
        boxes[i - 1] = prev
    if p.restart_backward:
        state = init_state
    prev = r_tau
    for i in range(tau - 1, 0, -1):
        # the pair (i, i+1) flow, sampled at the later box and reversed in time
        prior = _prior_box(flows[i - 1], prev, -1.0, W, H)
        prev, s_inst[i - 1], s_cls[i - 1] = _step(scorer, c, i, prior, state, proposals, p)
        boxes[i - 1] = prev
    if p.mode == "combined":
        total = s_inst + s_cls
    elif p.mode == "instance":
        total = s_inst.copy()
    else:
        total = s_cls.copy()
    return Track(c, 1, boxes, scores=total, seed_frame=tau, score_inst=s_inst, score_class=s_cls)


def track_rows(video_id: str, tr: Track, track_id: int) -> list[str]:
    si = tr.score_inst if tr.score_inst is not None else np.zeros(len(tr))
    sc = tr.score_class if tr.score_class is not None else np.zeros(len(tr))
    return [f"{video_id} {tr.label} {track_id} {t} {b.x:g} {b.y:g} {b.w:g} {b.h:g} {si[k]:.9g} {sc[k]:.9g}\n"
            for k, (t, b) in enumerate(zip(tr.frames(), tr.boxes))]


def write_tracks(path: str | Path, video_id: str, tracks: Sequence[Track]) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("".join(r for k, tr in enumerate(tracks) for r in track_rows(video_id, tr, k)))
    tmp.replace(path)
