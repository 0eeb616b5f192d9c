import numpy as np
import pytest

from CycleWalk.config import RunConfig
from CycleWalk.data.synth import SpriteSceneConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_scene():
    """32 x 32 frames giving a 3 x 3 grid with 16 px patches at stride 8."""
    return SpriteSceneConfig(height=32, width=32, sprites=1, sprite_size=(8, 12),
                             velocity_range=(1, 3), frames=5)


@pytest.fixture
def small_run(tmp_path, small_scene):
    run = RunConfig(seed=3, out=str(tmp_path / "run"), sequences=3, heldout=2, scene=small_scene)
    run.encoder.hidden_widths = [8]
    run.encoder.embed_dim = 4
    run.walk.clip_length = 3
    run.train.steps = 3
    run.train.batch_size = 2
    run.train.checkpoint_every = 2
    run.train.precision = "float64"
    run.propagation.context = 2
    run.propagation.neighbors = 3
    run.propagation.radius = 2
    run.adapt.updates = 2
    run.adapt.window = 2
    run.adapt.every = 2
    return run.validate()
