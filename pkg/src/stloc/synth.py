"""Deterministic synthetic scenes with exact ground-truth tubes.

A scene is a static value-noise background with one or more textured
rectangular actors.  Each actor follows a motion program during its action
extent and is absent outside it.  Actor texture is a striped pattern (the
stripe angle acts as a class cue) over per-video value noise, so both a
class-level and an instance-level appearance model have something to learn.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError
from .geometry import BoundingBox, Track
from .video import VideoSequence, as_frames, bilinear_sample

MOTION_PROGRAMS = ("hosc", "vosc", "drift", "flicker")


@dataclass(frozen=True)
class SceneSpec:
    label: str = "action"
    motion: str = "hosc"
    num_frames: int = 60
    width: int = 64
    height: int = 64
    actor_w: int = 16
    actor_h: int = 16
    # hosc / vosc: peak displacement (px) and period (frames)
    amplitude: float = 12.0
    period: float = 24.0
    # drift: velocity in px/frame, reflected at the frame borders
    vx: float = 2.0
    vy: float = 1.0
    # 1-based inclusive action extent; t_e = 0 means "last frame"
    t_b: int = 1
    t_e: int = 0
    background_seed: int = 0
    noise: float = 3.0
    stripe_angle: float = 0.0
    stripe_period: float = 6.0
    # appearance change: from switch_frame on, stripes turn to switch_angle
    switch_frame: int = 0
    switch_angle: float = 90.0
    # actor reference position (top-left); negative means automatic
    start_x: float = -1.0
    start_y: float = -1.0

    @property
    def extent(self) -> tuple[int, int]:
        return self.t_b, (self.t_e if self.t_e > 0 else self.num_frames)

    def validate(self) -> None:
        t_b, t_e = self.extent
        if self.motion not in MOTION_PROGRAMS:
            raise ValueError(f"unknown motion program {self.motion!r}; expected one of {MOTION_PROGRAMS}")
        if self.num_frames < 1 or self.width < 1 or self.height < 1:
            raise ValueError("scene must have at least one 1x1 frame")
        if not 1 <= t_b <= t_e <= self.num_frames:
            raise ValueError(f"invalid action extent [{t_b}, {t_e}] for {self.num_frames} frames")
        if self.actor_w < 1 or self.actor_h < 1:
            raise ValueError("actor must be at least 1x1")
        if self.actor_w > self.width or self.actor_h > self.height:
            raise ValueError(f"actor {self.actor_w}x{self.actor_h} larger than frame {self.width}x{self.height}")
        if self.period <= 0:
            raise ValueError("period must be positive")

    def to_text(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)}\n" for f in fields(self))

    @classmethod
    def from_text(cls, text: str, source: str = "<scene>") -> "SceneSpec":
        kinds = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{source}:{lineno}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in kinds:
                raise DataError(f"{source}:{lineno}: unknown scene key {key!r}")
            try:
                values[key] = _convert(kinds[key], val)
            except ValueError as exc:
                raise DataError(f"{source}:{lineno}: bad value for {key}: {val!r}") from exc
        spec = cls(**values)
        try:
            spec.validate()
        except ValueError as exc:
            raise DataError(f"{source}: {exc}") from exc
        return spec

    @classmethod
    def load(cls, path: str | Path) -> "SceneSpec":
        return cls.from_text(Path(path).read_text(), str(path))


def _convert(kind, val: str):
    kind = kind if isinstance(kind, str) else kind.__name__
    if kind == "int":
        return int(val)
    if kind == "float":
        return float(val)
    return val


def value_noise(h: int, w: int, cell: float, rng: np.random.Generator) -> np.ndarray:
    """Smooth noise in [-1, 1]: a random lattice every ``cell`` pixels, bilinearly interpolated."""
    gh, gw = int(math.ceil(h / cell)) + 2, int(math.ceil(w / cell)) + 2
    lattice = rng.uniform(-1.0, 1.0, size=(gh, gw))
    ys = np.arange(h) / cell
    xs = np.arange(w) / cell
    return bilinear_sample(lattice, ys[:, None], xs[None, :])


def actor_texture(spec: SceneSpec, angle: float, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:spec.actor_h, 0:spec.actor_w].astype(np.float64)
    theta = math.radians(angle)
    phase = (xx * math.cos(theta) + yy * math.sin(theta)) / spec.stripe_period
    tex = 150.0 + 70.0 * np.sin(2 * math.pi * phase)
    return tex + 30.0 * value_noise(spec.actor_h, spec.actor_w, 4.0, rng)


def _reflect(p: float, lo: float, hi: float) -> float:
    span = hi - lo
    if span <= 0:
        return lo
    q = (p - lo) % (2 * span)
    return lo + (q if q <= span else 2 * span - q)


def actor_positions(spec: SceneSpec) -> list[tuple[int, int]]:
    """Integer top-left actor positions for every frame of the action extent."""
    t_b, t_e = spec.extent
    n = t_e - t_b + 1
    max_x, max_y = spec.width - spec.actor_w, spec.height - spec.actor_h
    if spec.motion == "drift":
        # automatic start centres the straight path in the frame
        x0 = spec.start_x if spec.start_x >= 0 else min(max(math.floor((max_x - spec.vx * (n - 1)) / 2), 0), max_x)
        y0 = spec.start_y if spec.start_y >= 0 else min(max(math.floor((max_y - spec.vy * (n - 1)) / 2), 0), max_y)
        pts = [(_reflect(x0 + spec.vx * k, 0, max_x), _reflect(y0 + spec.vy * k, 0, max_y)) for k in range(n)]
    else:
        cx = spec.start_x if spec.start_x >= 0 else max_x / 2
        cy = spec.start_y if spec.start_y >= 0 else max_y / 2
        pts = []
        for k in range(n):
            s = math.sin(2 * math.pi * k / spec.period)
            if spec.motion == "hosc":
                pts.append((cx + spec.amplitude * s, cy))
            elif spec.motion == "vosc":
                pts.append((cx, cy + spec.amplitude * s))
            else:
                pts.append((cx, cy))
    out = []
    for x, y in pts:
        xi = min(max(int(math.floor(x + 0.5)), 0), max_x)
        yi = min(max(int(math.floor(y + 0.5)), 0), max_y)
        out.append((xi, yi))
    return out


def synth_multi_scene(specs: Sequence[SceneSpec], seed: int,
                      video_id: str | None = None) -> tuple[VideoSequence, list[Track]]:
    """Render several actors over the background of ``specs[0]``."""
    if not specs:
        raise ValueError("need at least one actor spec")
    base = specs[0]
    for s in specs:
        s.validate()
        if (s.num_frames, s.width, s.height) != (base.num_frames, base.width, base.height):
            raise ValueError("all actor specs must share frame count and size")
    rng = np.random.default_rng(seed)
    bg_rng = np.random.default_rng(base.background_seed)
    h, w = base.height, base.width
    background = 105.0 + 35.0 * value_noise(h, w, 10.0, bg_rng) + 8.0 * value_noise(h, w, 3.0, bg_rng)

    actors = []
    for s in specs:
        tex_a = actor_texture(s, s.stripe_angle, rng)
        tex_b = actor_texture(s, s.switch_angle, rng) if s.switch_frame > 0 else tex_a
        actors.append((s, actor_positions(s), tex_a, tex_b))

    frames = []
    for t in range(1, base.num_frames + 1):
        img = background.copy()
        for s, pos, tex_a, tex_b in actors:
            t_b, t_e = s.extent
            if not t_b <= t <= t_e:
                continue
            k = t - t_b
            tex = tex_b if (s.switch_frame > 0 and t >= s.switch_frame) else tex_a
            if s.motion == "flicker":
                gain = 0.75 + 0.25 * math.cos(math.pi * k / 2)
                tex = tex.mean() + (tex - tex.mean()) * gain
            x, y = pos[k]
            img[y:y + s.actor_h, x:x + s.actor_w] = tex
        if base.noise > 0:
            img = img + rng.normal(0.0, base.noise, size=img.shape)
        frames.append(img)

    tracks = []
    for s, pos, _, _ in actors:
        t_b, _ = s.extent
        boxes = [BoundingBox(float(x), float(y), float(s.actor_w), float(s.actor_h)) for x, y in pos]
        tracks.append(Track(s.label, t_b, boxes))
    vid = video_id if video_id is not None else f"{base.label}_{seed}"
    return VideoSequence(as_frames(frames), vid), tracks


def synth_scene(spec: SceneSpec, seed: int,
                video_id: str | None = None) -> tuple[VideoSequence, Track, str, tuple[int, int]]:
    """Render one actor; returns the video, its ground-truth track, label and extent."""
    video, tracks = synth_multi_scene([spec], seed, video_id)
    return video, tracks[0], spec.label, spec.extent


def with_label(spec: SceneSpec, label: str, **changes) -> SceneSpec:
    return replace(spec, label=label, **changes)
