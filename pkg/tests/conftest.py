import numpy as np
import pytest

from app.model import ArchitectureSpec, ModelMode, initialize_weights
from config.config import Config
from graph.skeleton import BodyVariant
from services.media_loader import SampleClip

TINY_FACE = 32


@pytest.fixture(autouse=True)
def isolated_config(tmp_path, monkeypatch):
    """Fresh defaults for every test; nothing is read from the user's home."""
    monkeypatch.delenv("FABULIGHT_CONFIG", raising=False)
    config = Config(
        tmp_path / "config.yaml",
        overrides={"training": {"show_progress": False}, "logging": {"file": None}},
    )
    Config.set_current_config(config)
    yield config


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_spec():
    return ArchitectureSpec(ModelMode.FABULIGHT, BodyVariant.UPPER, TINY_FACE)


@pytest.fixture
def tiny_store(tiny_spec):
    return initialize_weights(tiny_spec, seed=7, dtype=np.float64)


def make_clip(rng, frames, joints=11, face_size=TINY_FACE, name="e0", labels=None):
    """Random SampleClip with consistent temporal extents."""
    poses = rng.uniform(0.0, 1.0, (3, joints, frames))
    if labels is None:
        labels = (np.arange(frames) % 2).astype(np.int64)
    return SampleClip(
        key=(f"v_{name}", name),
        faces=rng.uniform(0.0, 1.0, (1, face_size, face_size, frames)),
        mfcc=rng.standard_normal((1, 13, 4 * frames)),
        poses=poses,
        labels=np.asarray(labels, dtype=np.int64),
        category="synthetic",
        timestamps=tuple(t / 25.0 for t in range(frames)),
    )


@pytest.fixture
def clip_factory(rng):
    def factory(frames, **kwargs):
        return make_clip(rng, frames, **kwargs)

    return factory
