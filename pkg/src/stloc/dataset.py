"""On-disk annotated video datasets and the synthetic dataset generator.

Layout::

    root/manifest.txt            key = value (classes, seed, count, version)
    root/groundtruth.txt         ground-truth tubes of every video
    root/train.txt, test.txt     video ids, one per line
    root/videos/<id>/frame_*.pgm and scene.txt
    root/props/<id>/props_*.txt  optional proposal files
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .errors import DataError
from .evaluation import GroundTruth, load_ground_truth, write_ground_truth
from .flow import FlowField, FlowParams, video_flows
from .proposals import ProposalSet, grid_proposals, load_proposals, proposal_path
from .scoring import ScorerConfig, VideoFeatures
from .stmh import StmhExtractor
from .synth import MOTION_PROGRAMS, SceneSpec, synth_multi_scene
from .video import VideoSequence, load_sequence, save_sequence


def class_names(n_classes: int) -> list[str]:
    return [f"c{k}_{MOTION_PROGRAMS[k % len(MOTION_PROGRAMS)]}" for k in range(n_classes)]


def class_spec(base: SceneSpec, k: int, n_classes: int, rng: np.random.Generator,
               extent_fraction: tuple[float, float] | None = None) -> SceneSpec:
    """Per-video scene of class k: motion program round-robin, stripe angle as class cue."""
    motion = MOTION_PROGRAMS[k % len(MOTION_PROGRAMS)]
    spec = replace(base, label=class_names(n_classes)[k], motion=motion,
                   stripe_angle=180.0 * k / max(n_classes, 1))
    max_x, max_y = base.width - base.actor_w, base.height - base.actor_h
    if motion == "drift":
        spec = replace(spec, vx=abs(base.vx) * rng.choice([-1.0, 1.0]), vy=abs(base.vy) * rng.choice([-1.0, 1.0]))
    elif motion == "hosc":
        a = min(base.amplitude, max_x / 2)
        spec = replace(spec, amplitude=a, start_x=float(rng.uniform(a, max_x - a)), start_y=float(rng.uniform(0, max_y)))
    elif motion == "vosc":
        a = min(base.amplitude, max_y / 2)
        spec = replace(spec, amplitude=a, start_x=float(rng.uniform(0, max_x)), start_y=float(rng.uniform(a, max_y - a)))
    else:
        spec = replace(spec, start_x=float(rng.uniform(0, max_x)), start_y=float(rng.uniform(0, max_y)))
    if extent_fraction is not None:
        lo, hi = extent_fraction
        n = base.num_frames
        dur = int(rng.integers(max(1, math.ceil(lo * n)), max(1, math.floor(hi * n)) + 1))
        t_b = int(rng.integers(1, n - dur + 2))
        spec = replace(spec, t_b=t_b, t_e=t_b + dur - 1)
    return spec


@dataclass(frozen=True)
class SynthOptions:
    count: int = 8
    n_classes: int = 2
    seed: int = 0
    test_fraction: float = 0.25
    extent_fraction: tuple[float, float] | None = None


def synth_dataset(root: str | Path, base: SceneSpec = SceneSpec(), opts: SynthOptions = SynthOptions()) -> "Dataset":
    """Write ``opts.count`` videos; video i has class ``i mod n_classes``."""
    root = Path(root)
    if opts.count < 0 or opts.n_classes < 1:
        raise ValueError("count must be >= 0 and n_classes >= 1")
    root.mkdir(parents=True, exist_ok=True)
    (root / "videos").mkdir(exist_ok=True)
    names = class_names(opts.n_classes)
    gts, per_class = [], {c: [] for c in names}
    for i in range(opts.count):
        k = i % opts.n_classes
        vseed = opts.seed * 100003 + i
        rng = np.random.default_rng([opts.seed, i])
        spec = replace(class_spec(base, k, opts.n_classes, rng, opts.extent_fraction), background_seed=vseed)
        vid = f"v{i:04d}_{names[k]}"
        video, tracks = synth_multi_scene([spec], vseed, vid)
        vdir = root / "videos" / vid
        save_sequence(video, vdir)
        (vdir / "scene.txt").write_text(spec.to_text())
        gts.append(GroundTruth(vid, spec.label, tracks[0]))
        per_class[names[k]].append(vid)
    train, test = [], []
    for c in names:
        ids = per_class[c]
        n_test = int(round(opts.test_fraction * len(ids))) if len(ids) > 1 else 0
        train += ids[:len(ids) - n_test]
        test += ids[len(ids) - n_test:]
    write_ground_truth(root / "groundtruth.txt", gts)
    _write_lines(root / "train.txt", sorted(train))
    _write_lines(root / "test.txt", sorted(test))
    manifest = {"version": __version__, "seed": opts.seed, "count": opts.count,
                "classes": ",".join(names), "test_fraction": opts.test_fraction,
                "extent_fraction": "" if opts.extent_fraction is None else ",".join(map(str, opts.extent_fraction))}
    _write_lines(root / "manifest.txt", [f"{k} = {v}" for k, v in manifest.items()])
    (root / "base_scene.txt").write_text(base.to_text())
    return Dataset(root)


def _write_lines(path: Path, lines: Sequence[str]) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("".join(f"{x}\n" for x in lines))
    tmp.replace(path)


class AnnotatedVideo:
    """One dataset video with lazily computed flow, features, descriptors and proposals."""

    def __init__(self, video_id: str, root: Path, gts: Sequence[GroundTruth], scorer: ScorerConfig,
                 flow_params: FlowParams = FlowParams(), flow_cache: str | Path | None = None,
                 stmh_nt: int = 3, stmh_ns: int = 8, video: VideoSequence | None = None):
        self.video_id = video_id
        self.root = root
        self.ground_truth = list(gts)
        self.scorer = scorer
        self.flow_params = flow_params
        self.flow_cache = flow_cache
        self.stmh_nt, self.stmh_ns = stmh_nt, stmh_ns
        if video is not None:
            self.__dict__["video"] = video

    @cached_property
    def video(self) -> VideoSequence:
        return load_sequence(self.root / "videos" / self.video_id, self.video_id)

    @property
    def gts(self):
        return [g.track for g in self.ground_truth]

    @cached_property
    def flows(self) -> list[FlowField]:
        return video_flows(self.video, self.flow_params, self.flow_cache)

    @cached_property
    def features(self) -> VideoFeatures:
        return VideoFeatures(self.video, self.flows, self.scorer)

    @cached_property
    def stmh(self) -> StmhExtractor:
        return StmhExtractor(self.video, self.flows, self.stmh_nt, self.stmh_ns)

    @cached_property
    def proposals(self) -> list[ProposalSet]:
        d = self.root / "props" / self.video_id
        v = self.video
        if d.is_dir():
            return [load_proposals(proposal_path(d, t), t, v.width, v.height) for t in range(1, len(v) + 1)]
        return [grid_proposals(v[t], t) for t in range(1, len(v) + 1)]


class Dataset:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        mpath = self.root / "manifest.txt"
        if not mpath.exists():
            raise DataError(f"{mpath}: missing dataset manifest")
        self.manifest = {}
        for line in mpath.read_text().splitlines():
            if "=" in line:
                k, v = (s.strip() for s in line.split("=", 1))
                self.manifest[k] = v
        self.classes = [c for c in self.manifest.get("classes", "").split(",") if c]
        gpath = self.root / "groundtruth.txt"
        self.ground_truth = load_ground_truth(gpath) if gpath.exists() else []
        for g in self.ground_truth:
            if g.label not in self.classes:
                raise DataError(f"{gpath}: annotation class {g.label!r} not in class list {self.classes}")

    def split(self, name: str) -> list[str]:
        p = self.root / f"{name}.txt"
        if not p.exists():
            raise DataError(f"{p}: missing split file")
        return [ln.strip() for ln in p.read_text().splitlines() if ln.strip()]

    def gts_of(self, video_id: str) -> list[GroundTruth]:
        return [g for g in self.ground_truth if g.video_id == video_id]

    def items(self, ids: Sequence[str], scorer: ScorerConfig = ScorerConfig(), flow_params: FlowParams = FlowParams(),
              flow_cache=None, stmh_nt: int = 3, stmh_ns: int = 8) -> list[AnnotatedVideo]:
        return [AnnotatedVideo(v, self.root, self.gts_of(v), scorer, flow_params, flow_cache, stmh_nt, stmh_ns)
                for v in ids]
