import pytest

from cuemidi.model import save_checkpoint
from cuemidi.training import train_pipeline_toy


@pytest.fixture(scope="session")
def pipeline_model():
    """Loop-corpus toy model (continuous_token + boundary conditioning),
    memorized well enough to keep emitting strong chords every 1.6 s."""
    model, losses = train_pipeline_toy()
    assert losses[-1] < 0.05, "toy training failed to memorize the loop"
    return model


@pytest.fixture(scope="session")
def pipeline_checkpoint(pipeline_model, tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "toy.ckpt"
    save_checkpoint(path, pipeline_model)
    return path
