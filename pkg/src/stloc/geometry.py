"""Boxes, tracks and overlap measures.

Boxes use continuous ``[x, x + w) x [y, y + h)`` extents.  Whenever a box
has to be mapped onto pixels, :meth:`BoundingBox.pixel_bounds` rounds the
edges half-up and clips them to the raster, so integer boxes cover exactly
``w * h`` pixels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box must have positive size, got w={self.w} h={self.h}")
        if not all(math.isfinite(v) for v in (self.x, self.y, self.w, self.h)):
            raise ValueError("box coordinates must be finite")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return self.x + 0.5 * self.w, self.y + 0.5 * self.h

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)

    def shifted(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x + dx, self.y + dy, self.w, self.h)

    def intersects(self, width: int, height: int) -> bool:
        return self.x < width and self.y < height and self.x2 > 0 and self.y2 > 0

    def clipped(self, width: int, height: int) -> "BoundingBox | None":
        """Intersection with the frame, or None when it is empty."""
        x1, y1 = max(self.x, 0.0), max(self.y, 0.0)
        x2, y2 = min(self.x2, float(width)), min(self.y2, float(height))
        if x2 <= x1 or y2 <= y1:
            return None
        return BoundingBox(x1, y1, x2 - x1, y2 - y1)

    def pixel_bounds(self, width: int, height: int) -> tuple[int, int, int, int]:
        """Pixel rectangle ``(c0, r0, c1, r1)`` (exclusive ends) inside the raster.

        Never empty for a box that intersects the raster.
        """
        if not self.intersects(width, height):
            raise ValueError(f"box {self.as_tuple()} lies outside the {width}x{height} raster")
        c0 = min(max(int(math.floor(self.x + 0.5)), 0), width - 1)
        r0 = min(max(int(math.floor(self.y + 0.5)), 0), height - 1)
        c1 = min(max(int(math.floor(self.x2 + 0.5)), c0 + 1), width)
        r1 = min(max(int(math.floor(self.y2 + 0.5)), r0 + 1), height)
        return c0, r0, c1, r1


def box_iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes, in [0, 1]."""
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def boxes_to_array(boxes: Sequence[BoundingBox]) -> np.ndarray:
    """Stack boxes into an ``(n, 4)`` float array of ``x, y, w, h``."""
    if len(boxes) == 0:
        return np.zeros((0, 4))
    return np.array([b.as_tuple() for b in boxes], dtype=np.float64)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between ``(n, 4)`` and ``(m, 4)`` box arrays."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    ax2, ay2 = a[:, 0] + a[:, 2], a[:, 1] + a[:, 3]
    bx2, by2 = b[:, 0] + b[:, 2], b[:, 1] + b[:, 3]
    iw = np.minimum(ax2[:, None], bx2[None]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(ay2[:, None], by2[None]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None] - inter
    return inter / union


def pixel_bounds_array(boxes: np.ndarray, width: int, height: int) -> np.ndarray:
    """Vectorized :meth:`BoundingBox.pixel_bounds` for an ``(n, 4)`` array."""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    c0 = np.clip(np.floor(boxes[:, 0] + 0.5), 0, width - 1).astype(np.int64)
    r0 = np.clip(np.floor(boxes[:, 1] + 0.5), 0, height - 1).astype(np.int64)
    c1 = np.minimum(np.maximum(np.floor(boxes[:, 0] + boxes[:, 2] + 0.5), c0 + 1), width).astype(np.int64)
    r1 = np.minimum(np.maximum(np.floor(boxes[:, 1] + boxes[:, 3] + 0.5), r0 + 1), height).astype(np.int64)
    return np.stack([c0, r0, c1, r1], axis=1)


def cell_edges(lo: np.ndarray, hi: np.ndarray, ncells: int) -> np.ndarray:
    """Split integer ranges ``[lo, hi)`` into ``ncells`` integer cells.

    Every cell gets ``(hi - lo) // ncells`` pixels and the remainder goes to
    the last cell.  Returns an ``(n, ncells + 1)`` array of edges.
    """
    lo = np.asarray(lo, dtype=np.int64)
    hi = np.asarray(hi, dtype=np.int64)
    size = (hi - lo) // ncells
    edges = lo[..., None] + size[..., None] * np.arange(ncells + 1)
    edges[..., -1] = hi
    return edges


@dataclass
class Track:
    """Per-frame boxes over the contiguous 1-based frame range ``[start, end]``."""

    label: str
    start: int
    boxes: list[BoundingBox]
    scores: np.ndarray | None = None
    seed_frame: int | None = None
    score_inst: np.ndarray | None = field(default=None, repr=False)
    score_class: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.boxes) == 0:
            raise ValueError("a track needs at least one box")
        if self.start < 1:
            raise ValueError("frame indices start at 1")

    def __len__(self) -> int:
        return len(self.boxes)

    @property
    def end(self) -> int:
        return self.start + len(self.boxes) - 1

    def frames(self) -> range:
        return range(self.start, self.end + 1)

    def box_at(self, t: int) -> BoundingBox:
        if not self.start <= t <= self.end:
            raise KeyError(f"frame {t} outside track range [{self.start}, {self.end}]")
        return self.boxes[t - self.start]

    def segment(self, t_b: int, t_e: int) -> "Track":
        """Sub-track over ``[t_b, t_e]`` (clipped-free; bounds must lie inside)."""
        if not (self.start <= t_b <= t_e <= self.end):
            raise ValueError(f"segment [{t_b}, {t_e}] outside [{self.start}, {self.end}]")
        i, j = t_b - self.start, t_e - self.start + 1

        def _cut(a):
            return None if a is None else a[i:j]

        return Track(self.label, t_b, self.boxes[i:j], _cut(self.scores), self.seed_frame,
                     _cut(self.score_inst), _cut(self.score_class))
