"""Shared fixtures for the htgnn-ltv test suite."""

import numpy as np
import pytest

from htgnn_ltv.config import RunConfig
from htgnn_ltv.data.synth import sample_population


@pytest.fixture
def rng():
    """Seeded generator for random test instances."""
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    """A small model that trains in seconds."""
    return RunConfig(
        seed=3,
        batch_size=32,
        epochs=1,
        embed_dim=4,
        k_neighbors=3,
        hg_layers=1,
        max_seq_len=8,
        heads=2,
        model_dim=8,
        ffn_hidden=8,
        mask_dim=4,
        n_task_experts=1,
        n_shared_experts=1,
        moe_layers=2,
        expert_dim=8,
        tower_hidden=4,
        log_every=1,
    )


@pytest.fixture(scope="session")
def small_population():
    """160 synthetic users across four segments."""
    return sample_population(160, 4, seed=7)
