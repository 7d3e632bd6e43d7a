"""Region features, per-class action classifiers and precomputed score tables.

The region feature stands in for a learned two-stream embedding: a g x g
grid of 8-bin orientation histograms of the luma gradient (appearance half)
and of the flow vectors decoded from the flow image (motion half).  Each
half is L2-normalised, then the concatenation is renormalised.

Two routes compute it.  :func:`region_feature` resamples the box to a fixed
patch first.  :class:`VideoFeatures` votes once per frame at native
resolution and reads every box's cells from integral images, which is what
the tracker and the pipeline use: they score hundreds of boxes per frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._hist import gradient, grid_sums, integral, l2_normalize, orientation_votes
from .errors import DataError
from .flow import FlowField, decode_flow_image, flow_to_image, per_frame_flows
from .geometry import BoundingBox, boxes_to_array, cell_edges, iou_matrix, pixel_bounds_array
from .svm import ClassifierBank, SvmParams, train_mined
from .video import Frame, VideoSequence, crop_resize

# the trained per-class bank of region classifiers
ActionClassifierBank = ClassifierBank


@dataclass(frozen=True)
class ScorerConfig:
    kind: str = "builtin"
    grid: int = 4
    bins: int = 8
    motion: bool = True
    patch: int = 64

    def __post_init__(self):
        if self.kind not in ("builtin", "precomputed"):
            raise ValueError(f"unknown scorer kind {self.kind!r}")
        if self.grid < 1 or self.bins < 2:
            raise ValueError("grid must be >= 1 and bins >= 2")

    @property
    def dim(self) -> int:
        return (2 if self.motion else 1) * self.grid * self.grid * self.bins


def _motion_votes(flow_img: Frame, bins: int) -> np.ndarray:
    u, v, mag = decode_flow_image(flow_img)
    return orientation_votes(u, v, bins, weight=mag)


def _assemble(cells: np.ndarray, cfg: ScorerConfig) -> np.ndarray:
    """``(n, g, g, C)`` cell histograms -> ``(n, D)`` normalised features."""
    n = cells.shape[0]
    app = l2_normalize(cells[..., :cfg.bins].reshape(n, -1))
    if not cfg.motion:
        return app
    mot = l2_normalize(cells[..., cfg.bins:].reshape(n, -1))
    return l2_normalize(np.concatenate([app, mot], axis=1))


def region_feature(frame: Frame, flow_img: Frame | None, box: BoundingBox,
                   cfg: ScorerConfig = ScorerConfig()) -> np.ndarray:
    """Feature of one region computed on a ``cfg.patch``-sized resampled patch."""
    if cfg.kind != "builtin":
        raise ValueError("region features need the builtin scorer")
    if not box.intersects(frame.width, frame.height):
        raise ValueError(f"box {box.as_tuple()} outside the {frame.width}x{frame.height} frame")
    P = cfg.patch
    patch = crop_resize(frame.to_luma(), box, P, P).data
    gx, gy = gradient(patch)
    maps = [orientation_votes(gx, gy, cfg.bins)]
    if cfg.motion:
        if flow_img is None:
            raise ValueError("motion channel enabled but no flow image given")
        if flow_img.data.shape[:2] != frame.data.shape[:2]:
            raise ValueError("frame and flow image sizes differ")
        maps.append(_motion_votes(crop_resize(flow_img, box, P, P), cfg.bins))
    ii = integral(np.concatenate(maps, axis=0))
    edges = cell_edges(np.array([0]), np.array([P]), cfg.grid)
    return _assemble(grid_sums(ii, edges, edges), cfg)[0]


class VideoFeatures:
    """Integral-histogram region features for every frame of one video.

    ``flows`` holds the consecutive-pair flows; frame ``t`` uses the flow
    towards ``t + 1`` (the last frame reuses its predecessor's).
    """

    def __init__(self, video: VideoSequence, flows: Sequence[FlowField], cfg: ScorerConfig = ScorerConfig(),
                 cache_size: int | None = None):
        self.video = video
        self.cfg = cfg
        self.flows = per_frame_flows(flows, len(video), video.height, video.width)
        self._cache: dict[int, np.ndarray] = {}
        self._cache_size = cache_size

    @property
    def dim(self) -> int:
        return self.cfg.dim

    def flow_image(self, t: int) -> Frame:
        return flow_to_image(self.flows[t - 1])

    def _maps(self, t: int) -> np.ndarray:
        ii = self._cache.get(t)
        if ii is None:
            luma = self.video[t].luma()
            gx, gy = gradient(luma)
            maps = [orientation_votes(gx, gy, self.cfg.bins)]
            if self.cfg.motion:
                maps.append(_motion_votes(self.flow_image(t), self.cfg.bins))
            ii = integral(np.concatenate(maps, axis=0))
            if self._cache_size is not None and len(self._cache) >= self._cache_size:
                self._cache.pop(next(iter(self._cache)))
            self._cache[t] = ii
        return ii

    def features(self, t: int, boxes) -> np.ndarray:
        """``(n, D)`` features of boxes (``BoundingBox`` list or ``(n, 4)`` array) in frame ``t``."""
        arr = boxes if isinstance(boxes, np.ndarray) else boxes_to_array(boxes)
        arr = np.asarray(arr, dtype=np.float64).reshape(-1, 4)
        if len(arr) == 0:
            return np.zeros((0, self.dim))
        W, H = self.video.width, self.video.height
        inside = (arr[:, 0] < W) & (arr[:, 1] < H) & (arr[:, 0] + arr[:, 2] > 0) & (arr[:, 1] + arr[:, 3] > 0)
        if not inside.all():
            bad = arr[~inside][0]
            raise ValueError(f"box {tuple(bad)} outside the {W}x{H} frame {t}")
        pb = pixel_bounds_array(arr, W, H)
        g = self.cfg.grid
        rows = cell_edges(pb[:, 1], pb[:, 3], g)
        cols = cell_edges(pb[:, 0], pb[:, 2], g)
        return _assemble(grid_sums(self._maps(t), rows, cols), self.cfg)


def score_region(bank: ClassifierBank, c: str, f: np.ndarray) -> float:
    return bank.score(c, f)


@dataclass(frozen=True)
class NegativeSampling:
    """How the proposal negative pool of the action classifiers is drawn."""

    frame_stride: int = 5
    per_frame: int = 16
    overlap: float = 0.3
    seed: int = 0


def negative_mask(proposal_boxes: np.ndarray, gt_boxes: np.ndarray, overlap: float = 0.3) -> np.ndarray:
    """Proposals whose IoU with every ground-truth box is below ``overlap``."""
    if len(gt_boxes) == 0:
        return np.ones(len(proposal_boxes), dtype=bool)
    return (iou_matrix(proposal_boxes, gt_boxes) < overlap).all(axis=1)


def gt_boxes_at(gts: Iterable, c: str | None, t: int) -> np.ndarray:
    """``(n, 4)`` ground-truth boxes of class ``c`` (any class if None) in frame t."""
    rows = [g.box_at(t).as_tuple() for g in gts if (c is None or g.label == c) and g.start <= t <= g.end]
    return np.array(rows, dtype=np.float64).reshape(-1, 4)


def action_training_sets(dataset: Sequence, classes: Sequence[str],
                         sampling: NegativeSampling = NegativeSampling()):
    """Positive features and negative pools per class.

    Each dataset item needs ``features`` (a :class:`VideoFeatures`),
    ``gts`` (ground-truth tracks) and ``proposals`` (one ProposalSet per frame).
    """
    pos = {c: [] for c in classes}
    pool = {c: [] for c in classes}
    for vi, item in enumerate(dataset):
        feats = item.features
        for g in item.gts:
            if g.label not in pos:
                raise DataError(f"annotation class {g.label!r} not in class list {list(classes)}")
            pos[g.label].append(np.vstack([feats.features(t, [g.box_at(t)]) for t in g.frames()]))
        rng = np.random.default_rng([sampling.seed, vi])
        for t in range(1, len(feats.video) + 1, sampling.frame_stride):
            props = item.proposals[t - 1] if t - 1 < len(item.proposals) else None
            if props is None or len(props) == 0:
                continue
            boxes = props.box_array()
            k = min(sampling.per_frame, len(boxes))
            pick = np.sort(rng.choice(len(boxes), size=k, replace=False))
            boxes = boxes[pick]
            X = feats.features(t, boxes)
            for c in classes:
                keep = negative_mask(boxes, gt_boxes_at(item.gts, c, t), sampling.overlap)
                if keep.any():
                    pool[c].append(X[keep])
    dim = dataset[0].features.dim if len(dataset) else 0
    out = {}
    for c in classes:
        P = np.vstack(pos[c]) if pos[c] else np.zeros((0, dim))
        N = np.vstack(pool[c]) if pool[c] else np.zeros((0, dim))
        out[c] = (P, N)
    return out


def train_action_classifiers(dataset: Sequence, classes: Sequence[str], svm: SvmParams = SvmParams(),
                             sampling: NegativeSampling = NegativeSampling()) -> ClassifierBank:
    """One hard-negative-mined linear SVM per class on region features."""
    sets = action_training_sets(dataset, classes, sampling)
    models = {}
    for c in classes:
        P, N = sets[c]
        if len(P) == 0:
            raise DataError(f"class {c!r} has no annotated regions")
        if len(N) == 0:
            raise DataError(f"class {c!r} has no negative proposals")
        models[c] = train_mined(P, N, svm)
    return ClassifierBank(models)


class ScoreLookupError(KeyError):
    pass


class PrecomputedScores:
    """Region scores read from ``video_id frame_idx proposal_idx class_name score`` rows."""

    def __init__(self, table: dict[tuple[str, int, int, str], float]):
        self.table = dict(table)

    @classmethod
    def load(cls, path: str | Path) -> "PrecomputedScores":
        path = Path(path)
        table = {}
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 5:
                raise DataError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
            vid, t, idx, c, s = parts
            try:
                key = (vid, int(t), int(idx), c)
                val = float(s)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: malformed row") from exc
            if not math.isfinite(val):
                raise DataError(f"{path}:{lineno}: score must be finite")
            if key in table:
                raise DataError(f"{path}:{lineno}: duplicate key {key}")
            table[key] = val
        return cls(table)

    def lookup(self, video_id: str, t: int, proposal_idx: int, c: str) -> float:
        key = (video_id, int(t), int(proposal_idx), c)
        try:
            return self.table[key]
        except KeyError:
            raise ScoreLookupError(f"no precomputed score for video={video_id} frame={t} "
                                   f"proposal={proposal_idx} class={c}") from None

    def frame_scores(self, video_id: str, t: int, n: int, classes: Sequence[str]) -> np.ndarray:
        """``(n, n_classes)`` scores of the first ``n`` proposals of frame ``t``."""
        return np.array([[self.lookup(video_id, t, i, c) for c in classes] for i in range(n)]).reshape(n, len(classes))
