"""Localisation metrics: spatial, temporal and tube IoU, AP/mAP, ROC/AUC, recall-track.

A detection is correct at threshold delta when its tube IoU with a still
unmatched ground truth of the same class and video is strictly above delta;
later detections of an already matched instance count as false positives.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError
from .geometry import BoundingBox, Track, box_iou
from .pipeline import Detection

__all__ = [
    "GroundTruth", "EvalResult", "box_iou", "temporal_iou", "st_iou", "match_detections",
    "pr_curve", "average_precision", "mean_ap", "roc_auc", "recall_track", "topk_accuracy",
    "load_ground_truth", "write_ground_truth", "load_detections", "format_report",
]


@dataclass(frozen=True)
class GroundTruth:
    video_id: str
    label: str
    track: Track

    @property
    def t_b(self) -> int:
        return self.track.start

    @property
    def t_e(self) -> int:
        return self.track.end


def temporal_iou(a: tuple[int, int], b: tuple[int, int]) -> float:
    """IoU of inclusive frame intervals."""
    inter = min(a[1], b[1]) - max(a[0], b[0]) + 1
    if inter <= 0:
        return 0.0
    union = (a[1] - a[0] + 1) + (b[1] - b[0] + 1) - inter
    return inter / union


def _tube_iou(a: Track, b: Track) -> float:
    tiou = temporal_iou((a.start, a.end), (b.start, b.end))
    if tiou == 0.0:
        return 0.0
    lo, hi = max(a.start, b.start), min(a.end, b.end)
    spatial = np.mean([box_iou(a.box_at(t), b.box_at(t)) for t in range(lo, hi + 1)])
    return float(tiou * spatial)


def st_iou(d: Detection | Track, g: GroundTruth | Track) -> float:
    """Temporal IoU times the mean box IoU over the shared frames."""
    a = d.track if isinstance(d, Detection) else d
    b = g.track if isinstance(g, GroundTruth) else g
    return _tube_iou(a, b)


def _sorted(dets: Sequence[Detection]) -> list[Detection]:
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    return [dets[i] for i in order]


def match_detections(dets: Sequence[Detection], gts: Sequence[GroundTruth], delta: float,
                     label: str) -> tuple[np.ndarray, np.ndarray, int]:
    """Greedy matching for one class: ``(scores, is_tp, n_gt)`` in ranked order."""
    cd = _sorted([d for d in dets if d.label == label])
    cg = [g for g in gts if g.label == label]
    used = np.zeros(len(cg), dtype=bool)
    tp = np.zeros(len(cd), dtype=bool)
    for k, d in enumerate(cd):
        best, best_j = delta, -1
        for j, g in enumerate(cg):
            if used[j] or g.video_id != d.video_id:
                continue
            o = st_iou(d, g)
            if o > best:
                best, best_j = o, j
        if best_j >= 0:
            used[best_j] = True
            tp[k] = True
    return np.array([d.score for d in cd], dtype=np.float64), tp, len(cg)


def pr_curve(tp: np.ndarray, n_gt: int) -> tuple[np.ndarray, np.ndarray]:
    ctp = np.cumsum(tp)
    cfp = np.cumsum(~tp)
    recall = ctp / n_gt if n_gt else np.zeros(len(tp))
    precision = ctp / np.maximum(ctp + cfp, 1)
    return recall, precision


def _ap_from(tp: np.ndarray, n_gt: int) -> float:
    if len(tp) == 0:
        return 0.0
    recall, precision = pr_curve(tp, n_gt)
    r = np.concatenate([[0.0], recall])
    p = np.concatenate([precision, [0.0]])
    # precision envelope: best precision at any recall at least as large
    env = np.maximum.accumulate(p[::-1])[::-1][:-1]
    return float(np.sum((r[1:] - r[:-1]) * env))


def average_precision(dets: Sequence[Detection], gts: Sequence[GroundTruth], delta: float,
                      label: str) -> float | None:
    """Every-point interpolated AP of one class; None without ground truth."""
    _, tp, n_gt = match_detections(dets, gts, delta, label)
    if n_gt == 0:
        return None
    return _ap_from(tp, n_gt)


@dataclass
class EvalResult:
    delta: float
    ap: dict[str, float | None]
    mAP: float
    auc: float | None = None
    roc: list[tuple[float, float]] = field(default_factory=list)

    @property
    def defined(self) -> dict[str, float]:
        return {c: v for c, v in self.ap.items() if v is not None}


def mean_ap(dets: Sequence[Detection], gts: Sequence[GroundTruth], delta: float,
            classes: Iterable[str] | None = None) -> EvalResult:
    if classes is None:
        classes = sorted({g.label for g in gts} | {d.label for d in dets})
    ap = {c: average_precision(dets, gts, delta, c) for c in classes}
    vals = [v for v in ap.values() if v is not None]
    return EvalResult(delta, ap, float(np.mean(vals)) if vals else 0.0)


def roc_auc(dets: Sequence[Detection], gts: Sequence[GroundTruth], delta: float,
            classes: Iterable[str] | None = None) -> tuple[list[tuple[float, float]], float]:
    """ROC points ``(fpr, tpr)`` pooled over classes and the trapezoidal AUC.

    TPR is over all ground-truth instances; the FPR denominator is the
    number of detections not matched as true positives.  With no false
    positive the AUC is the final TPR.
    """
    if classes is None:
        classes = sorted({g.label for g in gts} | {d.label for d in dets})
    scores, tps, n_gt = [], [], 0
    for c in classes:
        s, tp, n = match_detections(dets, gts, delta, c)
        scores.append(s)
        tps.append(tp)
        n_gt += n
    s = np.concatenate(scores) if scores else np.zeros(0)
    tp = np.concatenate(tps) if tps else np.zeros(0, dtype=bool)
    n_fp = int((~tp).sum())
    order = np.argsort(-s, kind="stable")
    s, tp = s[order], tp[order]
    pts = [(0.0, 0.0)]
    ctp = cfp = 0
    i = 0
    while i < len(s):
        j = i
        while j < len(s) and s[j] == s[i]:
            j += 1
        ctp += int(tp[i:j].sum())
        cfp += int((~tp[i:j]).sum())
        pts.append((cfp / n_fp if n_fp else 0.0, ctp / n_gt if n_gt else 0.0))
        i = j
    if n_fp == 0:
        return pts, pts[-1][1]
    auc = 0.0
    for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2
    return pts, float(auc)


def recall_track(tracks: dict[tuple[str, str], Sequence[Track]], gts: Sequence[GroundTruth],
                 delta: float = 0.5) -> float:
    """Fraction of ground truths covered (tube IoU >= delta) by a same-class track of their video."""
    if not gts:
        return 0.0
    hit = 0
    for g in gts:
        cands = tracks.get((g.video_id, g.label), ())
        if any(st_iou(tr, g) >= delta for tr in cands):
            hit += 1
    return hit / len(gts)


def topk_accuracy(ranked: dict[str, Sequence[str]], truth: dict[str, str], k: int) -> float:
    """Fraction of videos whose true class is among the first k selected classes."""
    if not truth:
        return 0.0
    return sum(truth[v] in list(ranked.get(v, ()))[:k] for v in truth) / len(truth)


def _parse_blocks(path: Path, header_fields: int):
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DataError(f"{path}: cannot read ({exc})") from exc
    rows = [(n, ln.split()) for n, ln in enumerate(lines, start=1) if ln.strip() and not ln.lstrip().startswith("#")]
    i = 0
    while i < len(rows):
        n, head = rows[i]
        if len(head) != header_fields:
            raise DataError(f"{path}:{n}: expected a {header_fields}-field header row, got {len(head)} fields")
        try:
            t_b, t_e = int(head[-2]), int(head[-1])
        except ValueError as exc:
            raise DataError(f"{path}:{n}: non-integer extent") from exc
        if not 1 <= t_b <= t_e:
            raise DataError(f"{path}:{n}: invalid extent [{t_b}, {t_e}]")
        count = t_e - t_b + 1
        body = rows[i + 1:i + 1 + count]
        if len(body) != count:
            raise DataError(f"{path}:{n}: expected {count} frame rows, found {len(body)}")
        boxes = []
        for k, (m, r) in enumerate(body):
            if len(r) != 5:
                raise DataError(f"{path}:{m}: expected 't x y w h'")
            try:
                t = int(r[0])
                box = BoundingBox(*(float(x) for x in r[1:]))
            except ValueError as exc:
                raise DataError(f"{path}:{m}: bad frame row ({exc})") from exc
            if t != t_b + k:
                raise DataError(f"{path}:{m}: expected frame {t_b + k}, got {t}")
            boxes.append(box)
        yield n, head, boxes
        i += 1 + count


def load_ground_truth(path: str | Path) -> list[GroundTruth]:
    path = Path(path)
    return [GroundTruth(h[0], h[1], Track(h[1], int(h[2]), boxes)) for _, h, boxes in _parse_blocks(path, 4)]


def write_ground_truth(path: str | Path, gts: Sequence[GroundTruth]) -> None:
    path = Path(path)
    rows = []
    for g in gts:
        rows.append(f"{g.video_id} {g.label} {g.t_b} {g.t_e}\n")
        rows += [f"{t} {b.x:g} {b.y:g} {b.w:g} {b.h:g}\n" for t, b in zip(g.track.frames(), g.track.boxes)]
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("".join(rows))
    tmp.replace(path)


def load_detections(path: str | Path) -> list[Detection]:
    path = Path(path)
    out = []
    for n, h, boxes in _parse_blocks(path, 5):
        try:
            score = float(h[2])
        except ValueError as exc:
            raise DataError(f"{path}:{n}: non-numeric score") from exc
        out.append(Detection(h[0], h[1], Track(h[1], int(h[3]), boxes), score, score))
    return out


def format_report(results: Sequence[EvalResult]) -> str:
    """Per-class AP rows and a mAP row, one column per threshold."""
    classes = sorted({c for r in results for c in r.ap})
    head = "class " + " ".join(f"d={r.delta:g}" for r in results)
    lines = [head]
    for c in classes:
        vals = []
        for r in results:
            v = r.ap.get(c)
            vals.append("n/a" if v is None else f"{v:.4f}")
        lines.append(f"{c} " + " ".join(vals))
    lines.append("mAP " + " ".join(f"{r.mAP:.4f}" for r in results))
    aucs = [r.auc for r in results]
    if any(a is not None for a in aucs):
        lines.append("AUC " + " ".join("n/a" if a is None else f"{a:.4f}" for a in aucs))
    return "\n".join(lines) + "\n"
