"""Per-frame candidate regions: loaded from files or generated on a grid."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ._hist import gradient, integral
from .errors import DataError
from .geometry import BoundingBox, boxes_to_array, pixel_bounds_array
from .video import Frame

DEFAULT_CAP = 256
DEFAULT_SCALES = (0.25, 0.4, 0.6, 0.8)
DEFAULT_RATIOS = (0.5, 1.0, 2.0)  # width / height


@dataclass(frozen=True)
class Proposal:
    box: BoundingBox
    objectness: float
    t: int


class ProposalSet:
    """Proposals of frame ``t`` sorted by descending objectness (stable).

    Backed by a box array and an objectness array; :class:`Proposal`
    objects are built on first access.
    """

    def __init__(self, t: int, proposals: Sequence[Proposal] = (), cap: int = DEFAULT_CAP):
        self.t = t
        self.cap = cap
        self._props: list[Proposal] | None = list(proposals)
        self._boxes = boxes_to_array([p.box for p in self._props])
        self._obj = np.array([p.objectness for p in self._props], dtype=np.float64)
        self._freeze()

    @classmethod
    def from_arrays(cls, t: int, boxes: np.ndarray, objectness: np.ndarray, cap: int = DEFAULT_CAP) -> "ProposalSet":
        """Already-ranked rows; boxes must be valid."""
        ps = cls.__new__(cls)
        ps.t, ps.cap, ps._props = t, cap, None
        ps._boxes = np.array(boxes, dtype=np.float64).reshape(-1, 4)
        ps._obj = np.array(objectness, dtype=np.float64).ravel()
        ps._freeze()
        return ps

    def _freeze(self) -> None:
        self._boxes.setflags(write=False)
        self._obj.setflags(write=False)

    @property
    def proposals(self) -> list[Proposal]:
        if self._props is None:
            self._props = [Proposal(BoundingBox(*b), float(s), self.t) for b, s in zip(self._boxes, self._obj)]
        return self._props

    def __len__(self) -> int:
        return len(self._obj)

    def __iter__(self):
        return iter(self.proposals)

    def __getitem__(self, i: int) -> Proposal:
        return self.proposals[i]

    def __eq__(self, other):
        return (isinstance(other, ProposalSet) and self.t == other.t and np.array_equal(self._boxes, other._boxes)
                and np.array_equal(self._obj, other._obj))

    def __repr__(self) -> str:
        return f"ProposalSet(t={self.t}, n={len(self)}, cap={self.cap})"

    @property
    def boxes(self) -> list[BoundingBox]:
        return [p.box for p in self.proposals]

    @property
    def objectness(self) -> np.ndarray:
        return self._obj

    def box_array(self) -> np.ndarray:
        return self._boxes

    @classmethod
    def ranked(cls, t: int, proposals: Sequence[Proposal], cap: int = DEFAULT_CAP) -> "ProposalSet":
        order = sorted(range(len(proposals)), key=lambda i: -proposals[i].objectness)
        return cls(t, [proposals[i] for i in order[:cap]], cap)

    def select(self, keep: np.ndarray) -> "ProposalSet":
        """Subset selected by a boolean mask, order preserved."""
        keep = np.asarray(keep, dtype=bool)
        return ProposalSet.from_arrays(self.t, self._boxes[keep], self._obj[keep], self.cap)


def proposal_path(directory: str | Path, t: int) -> Path:
    return Path(directory) / f"props_{t:06d}.txt"


def load_proposals(path: str | Path, t: int, frame_w: int | None = None, frame_h: int | None = None,
                   cap: int = DEFAULT_CAP) -> ProposalSet:
    """Parse ``x y w h objectness`` rows and keep the ``cap`` best."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DataError(f"{path}: cannot read proposals ({exc})") from exc
    props = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 5:
            raise DataError(f"{path}:{lineno}: expected 'x y w h objectness', got {len(parts)} fields")
        try:
            x, y, w, h, s = (float(p) for p in parts)
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: non-numeric field") from exc
        if not math.isfinite(s):
            raise DataError(f"{path}:{lineno}: objectness must be finite")
        try:
            box = BoundingBox(x, y, w, h)
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: invalid box ({exc})") from exc
        if frame_w is not None and frame_h is not None and not box.intersects(frame_w, frame_h):
            raise DataError(f"{path}:{lineno}: box {box.as_tuple()} outside the {frame_w}x{frame_h} frame")
        props.append(Proposal(box, s, t))
    return ProposalSet.ranked(t, props, cap)


def write_proposals(ps: ProposalSet, path: str | Path) -> None:
    rows = [f"{p.box.x:g} {p.box.y:g} {p.box.w:g} {p.box.h:g} {p.objectness:.9g}\n" for p in ps]
    Path(path).write_text("".join(rows))


def grid_boxes(frame_w: int, frame_h: int, scales: Sequence[float] = DEFAULT_SCALES,
               ratios: Sequence[float] = DEFAULT_RATIOS, stride: float = 0.25) -> np.ndarray:
    """Multi-scale sliding-window boxes in generation order, ``(n, 4)``."""
    if not scales or not ratios:
        raise ValueError("scales and ratios must be non-empty")
    side0 = min(frame_w, frame_h)
    out = []
    for s in scales:
        side = s * side0
        for r in ratios:
            bw = min(frame_w, max(1, int(round(side * math.sqrt(r)))))
            bh = min(frame_h, max(1, int(round(side / math.sqrt(r)))))
            sx = max(1, int(round(stride * bw)))
            sy = max(1, int(round(stride * bh)))
            xs = list(range(0, frame_w - bw + 1, sx))
            ys = list(range(0, frame_h - bh + 1, sy))
            if xs[-1] != frame_w - bw:
                xs.append(frame_w - bw)
            if ys[-1] != frame_h - bh:
                ys.append(frame_h - bh)
            for y in ys:
                for x in xs:
                    out.append((x, y, bw, bh))
    return np.array(out, dtype=np.float64)


def mean_gradient(frame: Frame, boxes: np.ndarray) -> np.ndarray:
    """Mean luma gradient magnitude inside each box."""
    gx, gy = gradient(frame.luma())
    ii = integral(np.hypot(gx, gy)[None])[0]
    b = pixel_bounds_array(boxes, frame.width, frame.height)
    c0, r0, c1, r1 = b.T
    s = ii[r1, c1] - ii[r0, c1] - ii[r1, c0] + ii[r0, c0]
    return s / ((r1 - r0) * (c1 - c0))


def grid_proposals(frame: Frame, t: int = 1, scales: Sequence[float] = DEFAULT_SCALES,
                   ratios: Sequence[float] = DEFAULT_RATIOS, stride: float = 0.25,
                   cap: int = DEFAULT_CAP) -> ProposalSet:
    """Grid boxes ranked by mean gradient magnitude on ``frame``."""
    boxes = grid_boxes(frame.width, frame.height, scales, ratios, stride)
    score = mean_gradient(frame, boxes)
    # stable ranking before building objects for the kept boxes only
    keep = np.argsort(-score, kind="stable")[:cap]
    return ProposalSet.from_arrays(t, boxes[keep], score[keep], cap)
