"""Shared synthetic fixtures."""
from __future__ import annotations

from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest

from stloc.flow import video_flows
from stloc.proposals import grid_proposals
from stloc.scoring import VideoFeatures, train_action_classifiers
from stloc.stmh import StmhExtractor
from stloc.synth import SceneSpec, synth_multi_scene


def make_item(specs, seed, video_id=None):
    """Rendered video with flows, features, STMH extractor and grid proposals."""
    if isinstance(specs, SceneSpec):
        specs = [specs]
    video, tracks = synth_multi_scene(specs, seed, video_id)
    flows = video_flows(video)
    return SimpleNamespace(
        video=video, flows=flows, gts=tracks,
        features=VideoFeatures(video, flows),
        stmh=StmhExtractor(video, flows),
        proposals=[grid_proposals(video[t], t) for t in range(1, len(video) + 1)],
    )


DRIFT = SceneSpec(label="drift", motion="drift", num_frames=40, width=64, height=64)
HOSC = replace(DRIFT, label="hosc", motion="hosc", stripe_angle=90.0)


@pytest.fixture(scope="session")
def drift_bank():
    """Action bank over {drift, hosc} trained on three videos of each."""
    items = [make_item(replace(DRIFT, background_seed=s), s) for s in range(100, 103)]
    items += [make_item(replace(HOSC, background_seed=s), s) for s in range(200, 203)]
    return train_action_classifiers(items, ["drift", "hosc"])


@pytest.fixture(scope="session")
def drift_item():
    return make_item(replace(DRIFT, background_seed=11), 11)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion():
    """Record one acceptance line, then fail the test if the criterion did not hold."""

    def record(name: str, ok: bool, detail: str = "") -> None:
        ACCEPTANCE.append((name, bool(ok), detail))
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        assert ok, f"{name}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
