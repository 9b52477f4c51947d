"""Shared fixtures: tiny synthetic datasets and small surrogate configs.

Everything is seeded so runs are reproducible. Fixtures that synthesize
or train cache at session scope to keep the suite quick on one core.
"""

from __future__ import annotations

import numpy as np
import pytest

from deskvla.policy import PolicyConfig, PolicyModel
from deskvla.trajectories import synthesize


@pytest.fixture(scope="session")
def tiny_config() -> PolicyConfig:
    # Small enough for finite differences, same layout as the default.
    return PolicyConfig(d_model=16, n_layers=2, n_heads=2, d_ff=32, base_vocab_size=128, seed=3)


@pytest.fixture()
def tiny_model(tiny_config) -> PolicyModel:
    return PolicyModel(tiny_config)


@pytest.fixture(scope="session")
def small_dataset():
    return synthesize(n_trajectories=6, steps=8, seed=11)


@pytest.fixture(scope="session")
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
