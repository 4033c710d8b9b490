from __future__ import annotations

import numpy as np
import pytest
from PIL import Image

from scope.backends.mocks import mock_backend_set
from scope.backends.scene import generate_synthetic_scene
from scope.config import SessionConfig
from scope.errors import EmptyInputError
from scope.session.events import EventKind
from scope.session.frames import DirectoryFrameSource, SyntheticFrameSource, scene_spec_from_dict
from scope.session.runner import run_scripted_session


def write_frames(directory, count=10, size=(160, 120)):
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(0)
    for i in range(count):
        array = rng.integers(0, 255, size=(size[1], size[0], 3), dtype=np.uint8)
        Image.fromarray(array).save(directory / f"frame_{i:04d}.png")


def test_directory_source_sorted_and_sized(tmp_path):
    write_frames(tmp_path / "frames", count=6)
    source = DirectoryFrameSource.open(tmp_path / "frames")
    assert source.count == 6
    assert (source.width, source.height) == (160, 120)
    assert [p.name for p in source.paths] == sorted(p.name for p in source.paths)
    assert source.describe()["kind"] == "directory"


def test_directory_source_empty_dir(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(EmptyInputError):
        DirectoryFrameSource.open(tmp_path / "empty")


def test_session_runs_over_directory_frames(tmp_path):
    write_frames(tmp_path / "frames", count=12)
    source = DirectoryFrameSource.open(tmp_path / "frames")
    scene = generate_synthetic_scene(seed=7)
    script = [
        {"frame": 1, "utterance": "segment the surgical instruments"},
        {"frame": 3, "utterance": "the first one, label it forceps"},
    ]
    log = run_scripted_session(source, script, SessionConfig(), mock_backend_set(scene), seed=7)
    assert len(log.events_of(EventKind.FRAME)) == 12
    assert log.events_of(EventKind.MASK_SELECTED)
    assert log.header["frames"]["kind"] == "directory"


def test_synthetic_describe_round_trips_spec():
    scene = generate_synthetic_scene(seed=3)
    described = SyntheticFrameSource(scene).describe()
    spec = scene_spec_from_dict(described["scene_spec"])
    assert spec == scene.spec
