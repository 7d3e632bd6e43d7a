"""Flat ``key = value`` run configuration with ``include`` support."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import DataError
from .flow import FlowParams
from .pipeline import WINDOW_LENGTHS, WINDOW_STRIDE, PipelineParams
from .scoring import NegativeSampling, ScorerConfig
from .stmh import CHUNK_LENGTH, CHUNK_STRIDE, CuboidSampling
from .svm import SvmParams
from .tracker import NeighborhoodParams, TrackerParams


@dataclass(frozen=True)
class RunConfig:
    dataset: str = ""
    model_dir: str = ""
    seed: int = 0
    # region scorer
    scorer_kind: str = "builtin"
    scorer_grid: int = 4
    scorer_bins: int = 8
    scorer_motion: bool = True
    scorer_patch: int = 64
    scores_file: str = ""
    # linear SVM (action and STMH banks)
    svm_C: float = 1.0
    svm_epochs: int = 10
    svm_rounds: int = 3
    svm_threshold: float = -1.0
    svm_lr_offset: float = 0.0
    svm_neg_ratio: int = 10
    neg_frame_stride: int = 5
    neg_per_frame: int = 16
    neg_overlap: float = 0.3
    cuboid_frame_stride: int = 10
    cuboid_per_frame: int = 4
    # STMH
    stmh_nt: int = 3
    stmh_ns: int = 8
    chunk_length: int = CHUNK_LENGTH
    chunk_stride: int = CHUNK_STRIDE
    # tracker
    tracker_rho: float = 0.1
    tracker_steps: int = 2
    tracker_scales: tuple[float, ...] = (0.8, 0.9, 1.0, 1.1, 1.2)
    tracker_update_epochs: int = 2
    tracker_mode: str = "combined"
    tracker_restart_backward: bool = False
    # pipeline
    topk: int = 5
    ntracks: int = 2
    theta: float = 0.3
    fusion: str = "sum"
    temporal: bool = True
    linking: bool = False
    window_lengths: tuple[int, ...] = WINDOW_LENGTHS
    window_stride: int = WINDOW_STRIDE
    prior_eps: float = 0.5
    # flow
    flow_alpha: float = 15.0
    flow_iterations: int = 100
    flow_levels: int = 3
    flow_scale: float = 0.5

    def scorer(self) -> ScorerConfig:
        return ScorerConfig(self.scorer_kind, self.scorer_grid, self.scorer_bins, self.scorer_motion, self.scorer_patch)

    def svm(self) -> SvmParams:
        return SvmParams(C=self.svm_C, epochs=self.svm_epochs, lr_offset=self.svm_lr_offset, seed=self.seed,
                         threshold=self.svm_threshold, rounds=self.svm_rounds, neg_ratio=self.svm_neg_ratio)

    def negative_sampling(self) -> NegativeSampling:
        return NegativeSampling(self.neg_frame_stride, self.neg_per_frame, self.neg_overlap, self.seed)

    def cuboid_sampling(self) -> CuboidSampling:
        return CuboidSampling(self.cuboid_frame_stride, self.cuboid_per_frame, self.seed)

    def tracker(self) -> TrackerParams:
        nb = NeighborhoodParams(self.tracker_rho, self.tracker_steps, tuple(self.tracker_scales))
        return TrackerParams(neighborhood=nb, svm=SvmParams(epochs=10, rounds=1, seed=self.seed),
                             update_epochs=self.tracker_update_epochs, mode=self.tracker_mode,
                             restart_backward=self.tracker_restart_backward, seed=self.seed)

    def pipeline(self) -> PipelineParams:
        return PipelineParams(topk=self.topk, ntracks=self.ntracks, theta=self.theta,
                              window_lengths=tuple(self.window_lengths), window_stride=self.window_stride,
                              fusion=self.fusion, temporal=self.temporal, linking=self.linking,
                              tracker=self.tracker())

    def flow(self) -> FlowParams:
        return FlowParams(self.flow_alpha, self.flow_iterations, self.flow_levels, self.flow_scale)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {_format(getattr(self, f.name))}\n" for f in fields(self))

    def with_values(self, **changes) -> "RunConfig":
        return replace(self, **changes)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(_format(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(name: str, raw: str):
    kind = _TYPES[name]
    if kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind.startswith("tuple[int"):
        return tuple(int(x) for x in raw.split(",") if x.strip())
    if kind.startswith("tuple[float"):
        return tuple(float(x) for x in raw.split(",") if x.strip())
    return raw


def _read(path: Path, seen: tuple[Path, ...]) -> dict:
    path = path.resolve()
    if path in seen:
        raise DataError(f"{path}: include cycle")
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"{path}: cannot read config ({exc})") from exc
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key == "include":
            inc = Path(raw)
            if not inc.is_absolute():
                inc = path.parent / inc
            values.update(_read(inc, seen + (path,)))
            continue
        if key not in _TYPES:
            raise DataError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _parse(key, raw)
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return values


def load_config(path: str | Path | None = None, **overrides) -> RunConfig:
    """Config from a file (later keys and later includes win), then overrides."""
    values = _read(Path(path), ()) if path is not None else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise DataError(str(exc)) from exc


def parse_config_text(text: str) -> RunConfig:
    """Config from text without includes (used for manifests)."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"<config>:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise DataError(f"<config>:{lineno}: unknown key {key!r}")
        try:
            values[key] = _parse(key, raw)
        except ValueError as exc:
            raise DataError(f"<config>:{lineno}: bad value for {key}: {exc}") from exc
    return RunConfig(**values)
