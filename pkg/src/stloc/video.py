"""Frames, sequences, patch extraction and frame file I/O."""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .errors import DataError
from .geometry import BoundingBox

FRAME_PATTERN = re.compile(r"^frame_(\d{6})\.(pgm|ppm)$")


@dataclass(frozen=True, eq=False)
class Frame:
    """An 8-bit raster, ``(height, width)`` for luma or ``(height, width, 3)`` for RGB."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.dtype != np.uint8:
            raise ValueError(f"frame data must be uint8, got {data.dtype}")
        if data.ndim == 3 and data.shape[2] == 1:
            data = data[:, :, 0]
        if data.ndim not in (2, 3) or (data.ndim == 3 and data.shape[2] != 3):
            raise ValueError(f"frame must be HxW or HxWx3, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("frame must be at least 1x1")
        data = np.ascontiguousarray(data)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3

    def __eq__(self, other):
        return isinstance(other, Frame) and np.array_equal(self.data, other.data)

    def luma(self) -> np.ndarray:
        """Luma as uint8, ``Y = round(0.299 R + 0.587 G + 0.114 B)``."""
        if self.channels == 1:
            return self.data
        rgb = self.data.astype(np.float64)
        y = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
        return np.clip(np.floor(y + 0.5), 0, 255).astype(np.uint8)

    def to_luma(self) -> "Frame":
        return self if self.channels == 1 else Frame(self.luma())


@dataclass(frozen=True, eq=False)
class VideoSequence:
    frames: tuple[Frame, ...]
    id: str = "video"

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise ValueError("a sequence needs at least one frame")
        shape = frames[0].data.shape
        for i, f in enumerate(frames):
            if f.data.shape != shape:
                raise ValueError(f"frame {i + 1} has shape {f.data.shape}, expected {shape}")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)

    def __getitem__(self, t: int) -> Frame:
        """1-based frame access."""
        if not 1 <= t <= len(self.frames):
            raise IndexError(f"frame {t} outside 1..{len(self.frames)}")
        return self.frames[t - 1]

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height

    def luma_stack(self) -> np.ndarray:
        """All frames as a ``(T, H, W)`` float64 luma array."""
        return np.stack([f.luma() for f in self.frames]).astype(np.float64)


def bilinear_sample(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample ``img[..., H, W]`` at real coordinates with edge replication.

    ``ys`` and ``xs`` broadcast to ``(H', W')``, or to ``(N, H', W')`` when
    ``img`` is an ``(N, H, W)`` batch.
    """
    h, w = img.shape[-2:]
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(xs).astype(np.int64), w - 1)
    y0 = np.minimum(np.floor(ys).astype(np.int64), h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    if img.ndim == 2:
        g = lambda yy, xx: img[yy, xx]
    else:
        lead = np.arange(img.shape[0]).reshape(-1, 1, 1)
        g = lambda yy, xx: img[lead, yy, xx]
    top = g(y0, x0) * (1 - fx) + g(y0, x1) * fx
    bottom = g(y1, x0) * (1 - fx) + g(y1, x1) * fx
    return top * (1 - fy) + bottom * fy


def resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of ``img[..., H, W]`` using pixel-center alignment."""
    h, w = img.shape[-2:]
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    return bilinear_sample(np.asarray(img, dtype=np.float64), ys[:, None], xs[None, :])


def crop_resize(frame: Frame, box: BoundingBox, out_w: int, out_h: int) -> Frame:
    """Bilinear ``out_w x out_h`` patch of ``box``; outside parts replicate the edge."""
    if not box.intersects(frame.width, frame.height):
        raise ValueError(f"box {box.as_tuple()} is outside the {frame.width}x{frame.height} frame")
    ys = box.y + (np.arange(out_h) + 0.5) * (box.h / out_h) - 0.5
    xs = box.x + (np.arange(out_w) + 0.5) * (box.w / out_w) - 0.5
    src = frame.data.astype(np.float64)
    if frame.channels == 1:
        out = bilinear_sample(src, ys[:, None], xs[None, :])
    else:
        out = np.stack([bilinear_sample(src[..., k], ys[:, None], xs[None, :]) for k in range(3)], axis=-1)
    return Frame(np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8))


def frame_path(directory: Path, index: int, channels: int = 1) -> Path:
    return Path(directory) / f"frame_{index:06d}.{'pgm' if channels == 1 else 'ppm'}"


def read_frame(path: str | Path) -> Frame:
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode == "L":
                data = np.asarray(im, dtype=np.uint8)
            elif im.mode == "RGB":
                data = np.asarray(im, dtype=np.uint8)
            else:
                raise DataError(f"{path}: unsupported image mode {im.mode}")
    except DataError:
        raise
    except Exception as exc:
        raise DataError(f"{path}: unreadable frame ({exc})") from exc
    return Frame(data)


def write_frame(frame: Frame, path: str | Path) -> None:
    mode = "L" if frame.channels == 1 else "RGB"
    Image.fromarray(np.asarray(frame.data), mode=mode).save(path, format="PPM")


def load_sequence(path: str | Path, video_id: str | None = None) -> VideoSequence:
    """Read ``frame_%06d.pgm|ppm`` files (1-based, contiguous) from a directory."""
    path = Path(path)
    if not path.is_dir():
        raise DataError(f"{path}: not a directory")
    found = {}
    for entry in sorted(path.iterdir()):
        m = FRAME_PATTERN.match(entry.name)
        if m:
            idx = int(m.group(1))
            if idx in found:
                raise DataError(f"{entry}: duplicate frame index {idx}")
            found[idx] = entry
    if not found:
        raise DataError(f"{path}: no frame_NNNNNN.pgm|ppm files")
    indices = sorted(found)
    if indices != list(range(1, len(indices) + 1)):
        missing = sorted(set(range(1, indices[-1] + 1)) - set(indices))
        raise DataError(f"{path}: frame indices must be contiguous from 1 (missing {missing[:5]})")
    frames = []
    for idx in indices:
        f = read_frame(found[idx])
        if frames and f.data.shape != frames[0].data.shape:
            raise DataError(f"{found[idx]}: shape {f.data.shape} differs from {frames[0].data.shape}")
        frames.append(f)
    return VideoSequence(tuple(frames), video_id if video_id is not None else path.name)


def save_sequence(video: VideoSequence, path: str | Path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for t, f in enumerate(video.frames, start=1):
        write_frame(f, frame_path(path, t, f.channels))


def as_frames(arrays: Sequence[np.ndarray]) -> tuple[Frame, ...]:
    return tuple(Frame(np.clip(np.floor(a + 0.5), 0, 255).astype(np.uint8)) for a in arrays)
