"""Training and detection drivers shared by the CLI, the demos and the tests."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

from . import __version__
from .config import RunConfig, parse_config_text
from .errors import DataError
from .pipeline import (Detection, DetectorModels, DurationPrior, PipelineParams, VideoContext, detect,
                       learn_duration_prior)
from .scoring import PrecomputedScores, train_action_classifiers
from .stmh import train_stmh_classifiers
from .svm import ClassifierBank


def train_models(items: Sequence, classes: Sequence[str], cfg: RunConfig = RunConfig()) -> DetectorModels:
    """Action bank, STMH bank and duration priors from annotated videos."""
    classes = list(classes)
    for it in items:
        for g in it.gts:
            if g.label not in classes:
                raise DataError(f"annotation class {g.label!r} not in class list {classes}")
    action = train_action_classifiers(items, classes, cfg.svm(), cfg.negative_sampling())
    stmh = train_stmh_classifiers(items, classes, cfg.svm(), cfg.chunk_length, cfg.chunk_stride,
                                  cfg.cuboid_sampling())
    durations = {c: [len(g) for it in items for g in it.gts if g.label == c] for c in classes}
    priors = learn_duration_prior(durations, cfg.window_lengths, cfg.prior_eps)
    return DetectorModels(action, stmh, priors, cfg.scorer(), cfg.stmh_nt, cfg.stmh_ns)


def save_models(models: DetectorModels, directory: str | Path, cfg: RunConfig) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    models.action.save(d / "action")
    models.stmh.save(d / "stmh")
    models.priors.save(d / "priors.txt")
    write_manifest(d / "manifest.txt", cfg, {"classes": ",".join(models.classes)})


def load_models(directory: str | Path) -> tuple[DetectorModels, RunConfig]:
    d = Path(directory)
    if not d.is_dir():
        raise DataError(f"{d}: model directory not found")
    cfg = read_manifest(d / "manifest.txt")
    action = ClassifierBank.load(d / "action")
    stmh = ClassifierBank.load(d / "stmh")
    priors = DurationPrior.load(d / "priors.txt")
    try:
        return DetectorModels(action, stmh, priors, cfg.scorer(), cfg.stmh_nt, cfg.stmh_ns), cfg
    except ValueError as exc:
        raise DataError(f"{d}: {exc}") from exc


def write_manifest(path: str | Path, cfg: RunConfig, extra: dict | None = None) -> None:
    path = Path(path)
    lines = [f"# stloc {__version__}\n", cfg.to_text()]
    for k, v in (extra or {}).items():
        lines.append(f"# {k} = {v}\n")
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("".join(lines))
    tmp.replace(path)


def read_manifest(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: missing manifest")
    return parse_config_text(path.read_text())


def detect_item(item, models: DetectorModels, params: PipelineParams,
                table: PrecomputedScores | None = None) -> list[Detection]:
    """Detections of an :class:`~stloc.dataset.AnnotatedVideo`-like item (needs video, flows, proposals)."""
    ctx = VideoContext.build(item.video, models, item.proposals, item.flows)
    return detect(ctx, models, params, table)
