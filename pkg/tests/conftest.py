import numpy as np
import pytest

from convdesc import PipelineConfig, SynthConfig, generate_dataset, train_pipeline


@pytest.fixture(scope="session")
def synth_pair(tmp_path_factory):
    """Default evaluation dataset plus a disjoint heldout corpus for training."""
    root = tmp_path_factory.mktemp("synth")
    eval_manifest = generate_dataset(SynthConfig(), root / "eval")
    heldout_manifest = generate_dataset(
        SynthConfig(seed=SynthConfig().seed + 1), root / "heldout",
        role="heldout", id_prefix="h_",
    )
    return eval_manifest, heldout_manifest


@pytest.fixture(scope="session")
def trained_model(synth_pair):
    _, heldout = synth_pair
    return train_pipeline(PipelineConfig(seed=0), heldout)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
