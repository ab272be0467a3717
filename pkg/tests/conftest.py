import numpy as np
import pytest

from zslens.data import generate_synthetic, make_split, standardize_signatures
from zslens.model import TrainConfig, train

# One small dataset and trained model shared by the module/service/steering
# tests. Session scope keeps the suite fast; everything exposed is immutable.


@pytest.fixture(scope="session")
def tiny_dataset():
    return generate_synthetic(
        C_seen=6, C_unseen=2, a=5, d=12, per_class=20, noise_sigma=0.2, seed=7
    )


@pytest.fixture(scope="session")
def tiny_split(tiny_dataset):
    unseen = [n for n in tiny_dataset.class_names if n.startswith("unseen_")]
    return make_split(tiny_dataset, unseen, diag_fraction=0.2, seed=7)


@pytest.fixture(scope="session")
def tiny_signatures(tiny_dataset):
    return standardize_signatures(tiny_dataset.raw_attributes)


@pytest.fixture(scope="session")
def fast_config():
    return TrainConfig(epochs=8, hidden_dim=64, seed=7)


@pytest.fixture(scope="session")
def tiny_model(tiny_dataset, tiny_split, tiny_signatures, fast_config):
    model, _report = train(
        tiny_dataset, tiny_split, tiny_signatures,
        np.ones(tiny_dataset.n_attributes), fast_config,
    )
    return model
