import pytest

from lidarhmp import model as M
from lidarhmp.config import RunConfig
from lidarhmp.synth import SynthParams, synth_dataset

TINY = RunConfig(model=M.MICRO, lr=1e-3, batch=4, epochs=2, seed=0)


@pytest.fixture(scope="session")
def tiny_data(tmp_path_factory):
    """Two short clean sequences; enough for micro-model windows."""
    root = tmp_path_factory.mktemp("data") / "tiny"
    synth_dataset(root, SynthParams(n_sequences=2, frames_per_sequence=8, seed=21,
                                    dist_min=6.0, dist_max=9.0))
    return root


@pytest.fixture
def tiny_cfg():
    return TINY
