"""Spatio-temporal motion histograms (STMH) over track chunks.

A chunk of a track is split into ``n_t`` temporal cells and each region into
``n_s x n_s`` spatial cells.  Every spatio-temporal cell accumulates four
histograms: HOG (8 bins, luma gradient), HOF (8 bins plus a zero bin for
flow magnitude below 0.04 px/frame), MBHx and MBHy (8 bins each, gradient
of u and of v).  Orientations are signed over 360 degrees with bilinear bin
interpolation and magnitude-weighted votes; zero-bin votes weigh 1.  Each
histogram is L2-normalised on its own; the layout is temporal cell, then
spatial cell in row-major order, then channel (HOG, HOF, MBHx, MBHy).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._hist import gradient, grid_sums, integral, l2_normalize, orientation_votes
from .errors import DataError
from .flow import FlowField, per_frame_flows
from .geometry import BoundingBox, Track, boxes_to_array, cell_edges, iou_matrix, pixel_bounds_array
from .scoring import gt_boxes_at
from .svm import ClassifierBank, SvmParams, train_mined
from .video import VideoSequence

CHANNELS = (("hog", 8), ("hof", 9), ("mbhx", 8), ("mbhy", 8))
CELL_DIM = sum(n for _, n in CHANNELS)  # 33
HOF_ZERO_THRESHOLD = 0.04
CHUNK_LENGTH = 15
CHUNK_STRIDE = 5

StmhClassifierBank = ClassifierBank


def stmh_dim(n_t: int = 3, n_s: int = 8) -> int:
    return n_t * n_s * n_s * CELL_DIM


@dataclass(frozen=True)
class Chunk:
    start: int
    length: int
    boxes: tuple[BoundingBox, ...]

    @property
    def end(self) -> int:
        return self.start + self.length - 1


def extract_chunks(track: Track, L: int = CHUNK_LENGTH, stride: int = CHUNK_STRIDE) -> list[Chunk]:
    """Chunks of ``L`` frames every ``stride`` frames; a shorter track yields one chunk."""
    n = len(track)
    if n < L:
        return [Chunk(track.start, n, tuple(track.boxes))]
    return [Chunk(track.start + o, L, tuple(track.boxes[o:o + L])) for o in range(0, n - L + 1, stride)]


def _frame_maps(luma: np.ndarray, flow: FlowField) -> np.ndarray:
    """Per-pixel votes of one frame, ``(33, H, W)``."""
    gx, gy = gradient(luma)
    u = flow.u.astype(np.float64)
    v = flow.v.astype(np.float64)
    mag = np.hypot(u, v)
    moving = mag >= HOF_ZERO_THRESHOLD
    hof = np.empty((9,) + u.shape)
    hof[:8] = orientation_votes(u, v, 8, weight=np.where(moving, mag, 0.0))
    hof[8] = (~moving).astype(np.float64)
    uxg, uyg = gradient(u)
    vxg, vyg = gradient(v)
    return np.concatenate([orientation_votes(gx, gy, 8), hof,
                           orientation_votes(uxg, uyg, 8), orientation_votes(vxg, vyg, 8)])


class StmhExtractor:
    """Caches per-frame integral vote maps of one video."""

    def __init__(self, video: VideoSequence, flows: Sequence[FlowField], n_t: int = 3, n_s: int = 8):
        if n_t < 1 or n_s < 1:
            raise ValueError("n_t and n_s must be >= 1")
        self.video = video
        self.flows = per_frame_flows(flows, len(video), video.height, video.width)
        if len(self.flows) != len(video):
            raise DataError(f"{video.id}: {len(self.flows)} flows for {len(video)} frames")
        self.n_t = n_t
        self.n_s = n_s
        self._cache: dict[int, np.ndarray] = {}

    @property
    def dim(self) -> int:
        return stmh_dim(self.n_t, self.n_s)

    def _maps(self, t: int) -> np.ndarray:
        ii = self._cache.get(t)
        if ii is None:
            if not 1 <= t <= len(self.video):
                raise DataError(f"{self.video.id}: frame {t} outside 1..{len(self.video)}")
            ii = integral(_frame_maps(self.video[t].luma(), self.flows[t - 1]))
            self._cache[t] = ii
        return ii

    def cell_histograms(self, t: int, box: BoundingBox) -> np.ndarray:
        """Raw (unnormalised) ``(n_s, n_s, 33)`` cell votes of one region."""
        W, H = self.video.width, self.video.height
        pb = pixel_bounds_array(boxes_to_array([box]), W, H)
        rows = cell_edges(pb[:, 1], pb[:, 3], self.n_s)
        cols = cell_edges(pb[:, 0], pb[:, 2], self.n_s)
        return grid_sums(self._maps(t), rows, cols)[0]

    def raw(self, chunk: Chunk) -> np.ndarray:
        """Unnormalised ``(n_t, n_s, n_s, 33)`` votes of a chunk."""
        acc = np.zeros((self.n_t, self.n_s, self.n_s, CELL_DIM))
        per_cell = max(1, chunk.length // self.n_t)
        for k, box in enumerate(chunk.boxes):
            cell = min(k // per_cell, self.n_t - 1)
            acc[cell] += self.cell_histograms(chunk.start + k, box)
        return acc

    def descriptor(self, chunk: Chunk) -> np.ndarray:
        acc = self.raw(chunk)
        parts = []
        lo = 0
        for _, n in CHANNELS:
            parts.append(l2_normalize(acc[..., lo:lo + n]))
            lo += n
        return np.concatenate(parts, axis=-1).ravel()

    def descriptors(self, chunks: Sequence[Chunk]) -> np.ndarray:
        if not chunks:
            return np.zeros((0, self.dim))
        return np.stack([self.descriptor(c) for c in chunks])


def stmh_descriptor(chunk: Chunk, frames: VideoSequence, flows: Sequence[FlowField],
                    n_t: int = 3, n_s: int = 8) -> np.ndarray:
    return StmhExtractor(frames, flows, n_t, n_s).descriptor(chunk)


def cuboid(box: BoundingBox, center: int, num_frames: int, L: int = CHUNK_LENGTH) -> Chunk:
    """Fixed box over ``L`` frames centred on ``center``, shifted to fit the video."""
    L = min(L, num_frames)
    start = min(max(1, center - L // 2), num_frames - L + 1)
    return Chunk(start, L, (box,) * L)


@dataclass(frozen=True)
class CuboidSampling:
    """How negative cuboids are drawn from proposals."""

    frame_stride: int = 10
    per_frame: int = 4
    seed: int = 0


def stmh_training_sets(dataset: Sequence, classes: Sequence[str], L: int = CHUNK_LENGTH,
                       stride: int = CHUNK_STRIDE, sampling: CuboidSampling = CuboidSampling()):
    """Positive chunk descriptors and negative cuboid pools per class.

    Dataset items need ``stmh`` (a :class:`StmhExtractor`), ``gts`` and
    ``proposals``.  A cuboid is a negative for class c when its proposal has
    zero overlap with every class-c ground-truth box of its centre frame.
    """
    pos = {c: [] for c in classes}
    pool = {c: [] for c in classes}
    for vi, item in enumerate(dataset):
        ext = item.stmh
        T = len(ext.video)
        for g in item.gts:
            if g.label not in pos:
                raise DataError(f"annotation class {g.label!r} not in class list {list(classes)}")
            pos[g.label].append(ext.descriptors(extract_chunks(g, L, stride)))
        rng = np.random.default_rng([sampling.seed, vi])
        for t in range(1, T + 1, sampling.frame_stride):
            props = item.proposals[t - 1] if t - 1 < len(item.proposals) else None
            if props is None or len(props) == 0:
                continue
            boxes = props.box_array()
            k = min(sampling.per_frame, len(boxes))
            pick = np.sort(rng.choice(len(boxes), size=k, replace=False))
            boxes = boxes[pick]
            eligible = {c: _no_overlap(boxes, gt_boxes_at(item.gts, c, t)) for c in classes}
            any_needed = np.zeros(len(boxes), dtype=bool)
            for m in eligible.values():
                any_needed |= m
            desc = {}
            for i in np.flatnonzero(any_needed):
                desc[i] = ext.descriptor(cuboid(BoundingBox(*boxes[i]), t, T, L))
            for c in classes:
                rows = [desc[i] for i in np.flatnonzero(eligible[c])]
                if rows:
                    pool[c].append(np.stack(rows))
    dim = dataset[0].stmh.dim if len(dataset) else 0
    out = {}
    for c in classes:
        P = np.vstack(pos[c]) if pos[c] else np.zeros((0, dim))
        N = np.vstack(pool[c]) if pool[c] else np.zeros((0, dim))
        out[c] = (P, N)
    return out


def _no_overlap(boxes: np.ndarray, gt: np.ndarray) -> np.ndarray:
    if len(gt) == 0:
        return np.ones(len(boxes), dtype=bool)
    return (iou_matrix(boxes, gt) == 0).all(axis=1)


def train_stmh_classifiers(dataset: Sequence, classes: Sequence[str], svm: SvmParams = SvmParams(),
                           L: int = CHUNK_LENGTH, stride: int = CHUNK_STRIDE,
                           sampling: CuboidSampling = CuboidSampling()) -> ClassifierBank:
    sets = stmh_training_sets(dataset, classes, L, stride, sampling)
    models = {}
    for c in classes:
        P, N = sets[c]
        if len(P) == 0:
            raise DataError(f"class {c!r} has no positive chunks")
        if len(N) == 0:
            raise DataError(f"class {c!r} has no negative cuboids")
        models[c] = train_mined(P, N, svm)
    return ClassifierBank(models)


class ChunkScorer:
    """Memoised per-chunk STMH scores of one track for one class."""

    def __init__(self, bank: ClassifierBank, c: str, ext: StmhExtractor):
        self.model = bank.model(c)
        self.ext = ext
        self._memo: dict[Chunk, float] = {}

    def chunk_score(self, chunk: Chunk) -> float:
        s = self._memo.get(chunk)
        if s is None:
            s = float(self.model.decision(self.ext.descriptor(chunk)[None])[0])
            self._memo[chunk] = s
        return s

    def track_score(self, track: Track, L: int = CHUNK_LENGTH, stride: int = CHUNK_STRIDE) -> float:
        chunks = extract_chunks(track, L, stride)
        return float(np.mean([self.chunk_score(ch) for ch in chunks]))


def score_track_stmh(bank: ClassifierBank, c: str, track: Track, ext: StmhExtractor,
                     L: int = CHUNK_LENGTH, stride: int = CHUNK_STRIDE) -> float:
    """Mean linear score of the track's chunks."""
    return ChunkScorer(bank, c, ext).track_score(track, L, stride)

