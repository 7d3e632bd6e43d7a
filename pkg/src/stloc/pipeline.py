"""Video-level detection: class selection, track generation, fusion, temporal localisation.

For a test video every proposal is scored by every class model and the
top-k classes by their best proposal score are kept.  For each of them a
few tracks are grown from the best proposals that do not overlap earlier
tracks of the class.  A track (or any window of it) is scored as
``sigmoid(S_desc) + sigmoid(sum of class scores)``, and the extent kept is
the sliding window maximising that score times a per-class duration prior.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError
from .flow import FlowField, FlowParams, video_flows
from .geometry import BoundingBox, Track, iou_matrix
from .proposals import ProposalSet, grid_proposals
from .scoring import PrecomputedScores, ScorerConfig, VideoFeatures
from .stmh import CHUNK_LENGTH, CHUNK_STRIDE, ChunkScorer, StmhExtractor
from .svm import ClassifierBank
from .tracker import RegionScorer, TrackerParams, track
from .video import VideoSequence

WINDOW_LENGTHS = (20, 30, 40, 50, 60, 70, 80, 90, 100, 150, 300, 450, 600)
WINDOW_STRIDE = 10
FUSION_MODES = ("sum", "mean")
_FUSE_LO = math.nextafter(0.0, 1.0)
_FUSE_HI = math.nextafter(2.0, 0.0)


def sigmoid(x: float) -> float:
    # split by sign so large |x| never overflows
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def fuse(s_desc: float, s_cnn: float) -> float:
    """Fused track score, in (0, 2) for finite inputs."""
    # saturated sigmoids would round onto the bounds; clamp just inside
    return min(max(sigmoid(s_desc) + sigmoid(s_cnn), _FUSE_LO), _FUSE_HI)


@dataclass(frozen=True)
class Detection:
    video_id: str
    label: str
    track: Track
    score: float
    window_score: float = 0.0

    @property
    def t_b(self) -> int:
        return self.track.start

    @property
    def t_e(self) -> int:
        return self.track.end


class DurationPrior:
    """Per-class smoothed histogram over the window-length bins."""

    def __init__(self, lengths: Sequence[int], probs: dict[str, np.ndarray]):
        self.lengths = tuple(int(x) for x in lengths)
        self.probs = {c: np.asarray(p, dtype=np.float64) for c, p in probs.items()}
        for c, p in self.probs.items():
            if p.shape != (len(self.lengths),) or not np.isclose(p.sum(), 1.0):
                raise ValueError(f"prior of class {c!r} must have one mass per bin summing to 1")

    @property
    def classes(self) -> list[str]:
        return list(self.probs)

    def bin_of(self, duration: int) -> int:
        return nearest_bin(duration, self.lengths)

    def __call__(self, c: str, length: int) -> float:
        try:
            p = self.probs[c]
        except KeyError:
            raise KeyError(f"no duration prior for class {c!r}") from None
        return float(p[self.bin_of(length)])

    def save(self, path: str | Path) -> None:
        path = Path(path)
        lines = ["lengths " + " ".join(str(x) for x in self.lengths) + "\n"]
        lines += [c + " " + " ".join(f"{v:.17g}" for v in self.probs[c]) + "\n" for c in self.probs]
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text("".join(lines))
        tmp.replace(path)

    @classmethod
    def load(cls, path: str | Path) -> "DurationPrior":
        path = Path(path)
        rows = [ln.split() for ln in path.read_text().splitlines() if ln.strip()]
        if not rows or rows[0][0] != "lengths":
            raise DataError(f"{path}:1: expected a 'lengths' header")
        try:
            lengths = [int(x) for x in rows[0][1:]]
            probs = {r[0]: np.array([float(x) for x in r[1:]]) for r in rows[1:]}
        except ValueError as exc:
            raise DataError(f"{path}: malformed prior") from exc
        try:
            return cls(lengths, probs)
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from exc


def nearest_bin(duration: int, lengths: Sequence[int]) -> int:
    """Index of the nearest length; ties go to the shorter one."""
    d = np.abs(np.asarray(lengths, dtype=np.float64) - duration)
    return int(np.argmin(d))  # lengths ascend, so the first minimum is the shorter


def learn_duration_prior(durations: dict[str, Sequence[int]], lengths: Sequence[int] = WINDOW_LENGTHS,
                         eps: float = 0.5) -> DurationPrior:
    """Smoothed frequency of each class's durations over the length bins."""
    lengths = sorted(lengths)
    probs = {}
    for c, ds in durations.items():
        if len(ds) == 0:
            raise DataError(f"class {c!r} has no annotated durations")
        counts = np.zeros(len(lengths))
        for d in ds:
            counts[nearest_bin(d, lengths)] += 1
        probs[c] = (counts + eps) / (counts.sum() + eps * len(lengths))
    return DurationPrior(lengths, probs)


def windows(n: int, lengths: Sequence[int] = WINDOW_LENGTHS, stride: int = WINDOW_STRIDE) -> list[tuple[int, int]]:
    """``(offset, length)`` pairs of an n-frame track, by length then offset."""
    out = [(o, L) for L in sorted(lengths) if L <= n for o in range(0, n - L + 1, stride)]
    if not out:
        out = [(0, n)]
    return out


@dataclass
class TrackScorer:
    """Window-restricted fused scores of one track."""

    track: Track
    class_scores: np.ndarray
    chunks: ChunkScorer
    fusion: str = "sum"
    L: int = CHUNK_LENGTH
    stride: int = CHUNK_STRIDE

    def s_desc(self, o: int, n: int) -> float:
        seg = self.track.segment(self.track.start + o, self.track.start + o + n - 1)
        return self.chunks.track_score(seg, self.L, self.stride)

    def s_cnn(self, o: int, n: int) -> float:
        s = self.class_scores[o:o + n]
        return float(s.sum() if self.fusion == "sum" else s.mean())

    def fused(self, o: int, n: int) -> float:
        return fuse(self.s_desc(o, n), self.s_cnn(o, n))


def temporal_localize(ts: TrackScorer, prior: DurationPrior | None, video_id: str,
                      lengths: Sequence[int] = WINDOW_LENGTHS, stride: int = WINDOW_STRIDE) -> Detection:
    """Best window by fused score times duration prior; ties to earlier start, then shorter."""
    tr = ts.track
    best = None
    for o, n in windows(len(tr), lengths, stride):
        f = ts.fused(o, n)
        w = f * (prior(tr.label, n) if prior is not None else 1.0)
        key = (-w, o, n)
        if best is None or key < best[0]:
            best = (key, o, n, f, w)
    _, o, n, f, w = best
    return Detection(video_id, tr.label, tr.segment(tr.start + o, tr.start + o + n - 1), f, w)


def full_track_detection(ts: TrackScorer, video_id: str) -> Detection:
    f = ts.fused(0, len(ts.track))
    return Detection(video_id, ts.track.label, ts.track, f, f)


def select_classes(scores: np.ndarray, classes: Sequence[str], k: int = 5) -> list[str]:
    """Top-k classes by their maximum proposal score; ties by class name."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1, len(classes))
    if len(scores) == 0:
        return []
    best = scores.max(axis=0)
    order = sorted(range(len(classes)), key=lambda i: (-best[i], classes[i]))
    return [classes[i] for i in order[:k]]


@dataclass(frozen=True)
class PipelineParams:
    topk: int = 5
    ntracks: int = 2
    theta: float = 0.3
    window_lengths: tuple[int, ...] = WINDOW_LENGTHS
    window_stride: int = WINDOW_STRIDE
    fusion: str = "sum"
    temporal: bool = True
    linking: bool = False
    link_lambda: float = 1.0
    tracker: TrackerParams = TrackerParams()

    def __post_init__(self):
        if self.fusion not in FUSION_MODES:
            raise ValueError(f"unknown fusion mode {self.fusion!r}")
        if self.topk < 1 or self.ntracks < 1:
            raise ValueError("topk and ntracks must be >= 1")


@dataclass
class ScoredProposals:
    """Proposals of every frame with their ``(n, n_classes)`` class scores."""

    proposals: list[ProposalSet]
    scores: list[np.ndarray]
    classes: list[str]

    def all_scores(self) -> np.ndarray:
        rows = [s for s in self.scores if len(s)]
        return np.vstack(rows) if rows else np.zeros((0, len(self.classes)))

    def class_column(self, c: str) -> list[np.ndarray]:
        j = self.classes.index(c)
        return [s[:, j] for s in self.scores]


def score_proposals(features: VideoFeatures, proposals: Sequence[ProposalSet], bank: ClassifierBank,
                    table: PrecomputedScores | None = None) -> ScoredProposals:
    out = []
    for t, ps in enumerate(proposals, start=1):
        if len(ps) == 0:
            out.append(np.zeros((0, len(bank.classes))))
        elif table is not None:
            out.append(table.frame_scores(features.video.id, t, len(ps), bank.classes))
        else:
            out.append(bank.scores(features.features(t, ps.box_array())))
    return ScoredProposals(list(proposals), out, list(bank.classes))


def _overlaps_previous(box: np.ndarray, t: int, previous: Sequence[Track], theta: float) -> bool:
    for tr in previous:
        if tr.start <= t <= tr.end:
            if iou_matrix(box[None], np.array([tr.box_at(t).as_tuple()]))[0, 0] >= theta:
                return True
    return False


def _ranked_candidates(col: Sequence[np.ndarray]) -> list[tuple[float, int, int]]:
    cands = [(float(s), t, i) for t, ss in enumerate(col, start=1) for i, s in enumerate(ss)]
    cands.sort(key=lambda r: -r[0])
    return cands


def generate_tracks(scorer: RegionScorer, sp: ScoredProposals, c: str, flows: Sequence[FlowField],
                    ntracks: int = 2, theta: float = 0.3, params: TrackerParams = TrackerParams()) -> list[Track]:
    """Up to ``ntracks`` tracks, each seeded at the best remaining non-overlapping proposal."""
    cands = _ranked_candidates(sp.class_column(c))
    tracks: list[Track] = []
    pos = 0
    while len(tracks) < ntracks:
        seed = None
        while pos < len(cands):
            _, t, i = cands[pos]
            pos += 1
            box = BoundingBox(*sp.proposals[t - 1].box_array()[i])
            if not _overlaps_previous(np.array(box.as_tuple()), t, tracks, theta):
                seed = (t, box)
                break
        if seed is None:
            break
        t, box = seed
        tracks.append(track(scorer, box, t, c, sp.proposals, flows, params))
    return tracks


def link_tracks_baseline(boxes: Sequence[np.ndarray], scores: Sequence[np.ndarray], label: str = "",
                         lam: float = 1.0) -> tuple[Track, list[int]] | None:
    """Best proposal path maximising summed scores plus ``lam`` times consecutive IoU.

    Frames without proposals break the path; the longest unbroken frame run
    is decoded.  Returns the track and its per-frame proposal indices, or
    None when no frame has a proposal.
    """
    T = len(boxes)
    runs, s = [], None
    for t in range(T + 1):
        has = t < T and len(boxes[t]) > 0
        if has and s is None:
            s = t
        elif not has and s is not None:
            runs.append((s, t))
            s = None
    if not runs:
        return None
    a, b = max(runs, key=lambda r: (r[1] - r[0], -r[0]))
    V = np.asarray(scores[a], dtype=np.float64).copy()
    back = []
    for t in range(a + 1, b):
        trans = V[:, None] + lam * iou_matrix(np.asarray(boxes[t - 1]), np.asarray(boxes[t]))
        arg = np.argmax(trans, axis=0)
        back.append(arg)
        V = trans[arg, np.arange(trans.shape[1])] + np.asarray(scores[t], dtype=np.float64)
    idx = [int(np.argmax(V))]
    for arg in reversed(back):
        idx.append(int(arg[idx[-1]]))
    idx.reverse()
    path = [BoundingBox(*boxes[a + k][j]) for k, j in enumerate(idx)]
    sc = np.array([scores[a + k][j] for k, j in enumerate(idx)], dtype=np.float64)
    return Track(label, a + 1, path, scores=sc, score_class=sc), idx


def link_tracks(sp: ScoredProposals, c: str, ntracks: int = 2, theta: float = 0.3,
                lam: float = 1.0) -> list[Track]:
    """Linking-baseline counterpart of :func:`generate_tracks`."""
    col = sp.class_column(c)
    boxes = [ps.box_array() for ps in sp.proposals]
    tracks = []
    for _ in range(ntracks):
        res = link_tracks_baseline(boxes, col, c, lam)
        if res is None:
            break
        tr, _ = res
        tracks.append(tr)
        keep = []
        for t, b in enumerate(boxes, start=1):
            if len(b) and tr.start <= t <= tr.end:
                keep.append(iou_matrix(b, np.array([tr.box_at(t).as_tuple()]))[:, 0] < theta)
            else:
                keep.append(np.ones(len(b), dtype=bool))
        boxes = [b[k] for b, k in zip(boxes, keep)]
        col = [s[k] for s, k in zip(col, keep)]
    return tracks


@dataclass
class DetectorModels:
    action: ClassifierBank
    stmh: ClassifierBank
    priors: DurationPrior
    scorer: ScorerConfig = field(default_factory=ScorerConfig)
    stmh_nt: int = 3
    stmh_ns: int = 8

    def __post_init__(self):
        if self.action.classes != self.stmh.classes:
            raise ValueError("action and STMH banks disagree on the class list")
        if self.action.dim != self.scorer.dim:
            raise ValueError(f"action bank dimension {self.action.dim} does not match "
                             f"the region feature dimension {self.scorer.dim}")

    @property
    def classes(self) -> list[str]:
        return self.action.classes


@dataclass
class VideoContext:
    """Everything derived from one test video that detection needs."""

    video: VideoSequence
    flows: list[FlowField]
    features: VideoFeatures
    stmh: StmhExtractor
    proposals: list[ProposalSet]

    @classmethod
    def build(cls, video: VideoSequence, models: DetectorModels, proposals: Sequence[ProposalSet] | None = None,
              flows: Sequence[FlowField] | None = None, flow_params: FlowParams = FlowParams(),
              flow_cache: str | Path | None = None) -> "VideoContext":
        if flows is None:
            flows = video_flows(video, flow_params, flow_cache)
        flows = list(flows)
        if proposals is None:
            proposals = [grid_proposals(video[t], t) for t in range(1, len(video) + 1)]
        if len(proposals) != len(video):
            raise DataError(f"{video.id}: {len(proposals)} proposal sets for {len(video)} frames")
        feats = VideoFeatures(video, flows, models.scorer)
        ext = StmhExtractor(video, flows, models.stmh_nt, models.stmh_ns)
        return cls(video, flows, feats, ext, list(proposals))


def detect(ctx: VideoContext, models: DetectorModels, params: PipelineParams = PipelineParams(),
           table: PrecomputedScores | None = None) -> list[Detection]:
    """Detections of one video sorted by descending score (stable)."""
    if ctx.stmh.dim != models.stmh.dim:
        raise ValueError(f"STMH bank dimension {models.stmh.dim} does not match descriptor dimension {ctx.stmh.dim}")
    sp = score_proposals(ctx.features, ctx.proposals, models.action, table)
    allsc = sp.all_scores()
    if len(allsc) == 0:
        return []
    scorer = RegionScorer(ctx.features, models.action)
    dets = []
    for c in select_classes(allsc, sp.classes, params.topk):
        if params.linking:
            tracks = link_tracks(sp, c, params.ntracks, params.theta, params.link_lambda)
        else:
            tracks = generate_tracks(scorer, sp, c, ctx.flows, params.ntracks, params.theta, params.tracker)
        chunks = ChunkScorer(models.stmh, c, ctx.stmh)
        for tr in tracks:
            cls_scores = _class_scores_along(scorer, c, tr)
            ts = TrackScorer(tr, cls_scores, chunks, params.fusion)
            if params.temporal:
                dets.append(temporal_localize(ts, models.priors, ctx.video.id,
                                              params.window_lengths, params.window_stride))
            else:
                dets.append(full_track_detection(ts, ctx.video.id))
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    return [dets[i] for i in order]


def _class_scores_along(scorer: RegionScorer, c: str, tr: Track) -> np.ndarray:
    if tr.score_class is not None:
        return np.asarray(tr.score_class, dtype=np.float64)
    return np.array([scorer.class_scores(c, scorer.feats(t, np.array([b.as_tuple()])))[0]
                     for t, b in zip(tr.frames(), tr.boxes)])


def detection_rows(d: Detection) -> list[str]:
    rows = [f"{d.video_id} {d.label} {d.score:.17g} {d.t_b} {d.t_e}\n"]
    rows += [f"{t} {b.x:.17g} {b.y:.17g} {b.w:.17g} {b.h:.17g}\n" for t, b in zip(d.track.frames(), d.track.boxes)]
    return rows


def write_detections(path: str | Path, dets: Sequence[Detection]) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("".join(r for d in dets for r in detection_rows(d)))
    tmp.replace(path)

