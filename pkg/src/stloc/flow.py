"""Dense optical flow, flow images and median-flow box shifts.

Flow is estimated with coarse-to-fine Horn-Schunck: at every pyramid level
the second frame is warped by the current estimate and the linearised
brightness-constancy equations are relaxed with Jacobi iterations.  All
operations are vectorised over a leading batch axis so every consecutive
frame pair of a video is solved in one call.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from ._hist import gradient
from ._kernels import hs_relax
from .errors import DataError
from .geometry import BoundingBox
from .video import Frame, VideoSequence, bilinear_sample, resize

FLOW_MAGIC = b"STFL"


@dataclass(frozen=True)
class FlowParams:
    alpha: float = 15.0
    iterations: int = 100
    levels: int = 3
    scale: float = 0.5

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.iterations < 1 or self.levels < 1:
            raise ValueError("iterations and levels must be >= 1")
        if not 0 < self.scale < 1:
            raise ValueError("scale must lie in (0, 1)")

    def tag(self) -> str:
        return f"a{self.alpha:g}_i{self.iterations}_l{self.levels}_s{self.scale:g}"


@dataclass(frozen=True, eq=False)
class FlowField:
    """Per-pixel displacement from one frame to the next: ``a(x) ~ b(x + (u, v))``."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.ascontiguousarray(self.u, dtype=np.float32)
        v = np.ascontiguousarray(self.v, dtype=np.float32)
        if u.ndim != 2 or u.shape != v.shape:
            raise ValueError(f"u and v must be equal-shape 2-D arrays, got {u.shape} and {v.shape}")
        if not (np.isfinite(u).all() and np.isfinite(v).all()):
            raise ValueError("flow must be finite")
        u.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    def __eq__(self, other):
        return isinstance(other, FlowField) and np.array_equal(self.u, other.u) and np.array_equal(self.v, other.v)

    @classmethod
    def zeros(cls, height: int, width: int) -> "FlowField":
        z = np.zeros((height, width), dtype=np.float32)
        return cls(z, z)


def _pyramid(stack: np.ndarray, levels: int, scale: float) -> list[np.ndarray]:
    pyr = [stack]
    sigma = 0.5 / scale
    for _ in range(levels - 1):
        prev = pyr[-1]
        h, w = prev.shape[1:]
        nh, nw = max(1, int(round(h * scale))), max(1, int(round(w * scale)))
        if (nh, nw) == (h, w):
            break
        blurred = gaussian_filter(prev, sigma=(0, sigma, sigma), mode="nearest")
        pyr.append(resize(blurred, nh, nw))
    return pyr


def _hs_level(a: np.ndarray, b: np.ndarray, u0: np.ndarray, v0: np.ndarray,
              alpha: float, iterations: int) -> tuple[np.ndarray, np.ndarray]:
    h, w = a.shape[1:]
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    bw = bilinear_sample(b, ys[None] + v0, xs[None] + u0)
    ax, ay = gradient(a)
    bx, by = gradient(bw)
    ix, iy = 0.5 * (ax + bx), 0.5 * (ay + by)
    it = bw - a
    return hs_relax(ix, iy, it, np.ascontiguousarray(u0), np.ascontiguousarray(v0), float(alpha), int(iterations))


def estimate_flow_batch(a: np.ndarray, b: np.ndarray, p: FlowParams = FlowParams()) -> tuple[np.ndarray, np.ndarray]:
    """Flow for a batch of luma pairs ``a[i] -> b[i]``, each ``(N, H, W)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 3:
        raise ValueError(f"frame stacks must share an (N, H, W) shape, got {a.shape} and {b.shape}")
    pa, pb = _pyramid(a, p.levels, p.scale), _pyramid(b, p.levels, p.scale)
    n = a.shape[0]
    u = np.zeros((n,) + pa[-1].shape[1:])
    v = np.zeros_like(u)
    for lvl in range(len(pa) - 1, -1, -1):
        h, w = pa[lvl].shape[1:]
        if u.shape[1:] != (h, w):
            sy, sx = h / u.shape[1], w / u.shape[2]
            u = resize(u, h, w) * sx
            v = resize(v, h, w) * sy
        u, v = _hs_level(pa[lvl], pb[lvl], u, v, p.alpha, p.iterations)
    return u.astype(np.float32), v.astype(np.float32)


def estimate_flow(a: Frame, b: Frame, p: FlowParams = FlowParams()) -> FlowField:
    if a.data.shape[:2] != b.data.shape[:2]:
        raise ValueError(f"frame sizes differ: {a.width}x{a.height} vs {b.width}x{b.height}")
    u, v = estimate_flow_batch(a.luma()[None], b.luma()[None], p)
    return FlowField(u[0], v[0])


def video_flows(video: VideoSequence, p: FlowParams = FlowParams(),
                cache_dir: str | Path | None = None, batch: int = 64) -> list[FlowField]:
    """Flow between each consecutive pair: element ``t - 1`` maps frame t to t + 1."""
    n = len(video) - 1
    if n <= 0:
        return []
    cache = None
    if cache_dir is not None:
        cache = Path(cache_dir) / video.id / p.tag()
        paths = [cache / f"flow_{t:06d}.stfl" for t in range(1, n + 1)]
        if all(q.exists() for q in paths):
            return [read_flow(q) for q in paths]
    luma = video.luma_stack()
    flows = []
    for s in range(0, n, batch):
        e = min(n, s + batch)
        u, v = estimate_flow_batch(luma[s:e], luma[s + 1:e + 1], p)
        flows.extend(FlowField(u[i], v[i]) for i in range(e - s))
    if cache is not None:
        cache.mkdir(parents=True, exist_ok=True)
        for q, f in zip(paths, flows):
            write_flow(f, q)
    return flows


def per_frame_flows(flows: Sequence[FlowField], num_frames: int, height: int, width: int) -> list[FlowField]:
    """One flow per frame: the forward flow, with the last frame reusing its predecessor's."""
    if num_frames == 1 or not flows:
        return [FlowField.zeros(height, width)] * num_frames
    return list(flows) + [flows[-1]]


def flow_to_image(f: FlowField) -> Frame:
    """3-channel byte image of ``(u, v, |flow|)`` scaled by 16; u and v centred on 128."""
    u = f.u.astype(np.float64)
    v = f.v.astype(np.float64)
    mag = np.sqrt(u * u + v * v)

    def enc(x):
        return np.clip(np.floor(x * 16.0 + 0.5), 0, 255).astype(np.uint8)

    return Frame(np.stack([enc(u + 8.0), enc(v + 8.0), enc(mag)], axis=-1))


def decode_flow_image(img: Frame) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of :func:`flow_to_image` up to quantisation: ``(u, v, magnitude)``."""
    d = img.data.astype(np.float64)
    return d[..., 0] / 16.0 - 8.0, d[..., 1] / 16.0 - 8.0, d[..., 2] / 16.0


def median_shift(f: FlowField, box: BoundingBox) -> tuple[float, float]:
    """Median flow inside the box; even counts take the lower middle element."""
    if not box.intersects(f.width, f.height):
        raise ValueError(f"box {box.as_tuple()} is outside the {f.width}x{f.height} flow field")
    c0, r0, c1, r1 = box.pixel_bounds(f.width, f.height)
    us = np.sort(f.u[r0:r1, c0:c1], axis=None)
    vs = np.sort(f.v[r0:r1, c0:c1], axis=None)
    k = (us.size - 1) // 2
    return float(us[k]), float(vs[k])


def write_flow(f: FlowField, path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(FLOW_MAGIC + struct.pack("<II", f.width, f.height))
        fh.write(f.u.astype("<f4").tobytes())
        fh.write(f.v.astype("<f4").tobytes())
    tmp.replace(path)


def read_flow(path: str | Path) -> FlowField:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != FLOW_MAGIC:
        raise DataError(f"{path}: not an STFL flow file")
    w, h = struct.unpack("<II", raw[4:12])
    n = w * h
    if len(raw) != 12 + 8 * n:
        raise DataError(f"{path}: expected {12 + 8 * n} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=12)
    return FlowField(data[:n].reshape(h, w), data[n:].reshape(h, w))
