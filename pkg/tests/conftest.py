"""Shared fixtures."""

from __future__ import annotations

import numpy as np
import pytest

from credal_transformer.config.model import DatasetSpec, Mechanism, ModelConfig


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_config() -> ModelConfig:
    """Two-layer credal model small enough for per-test forward passes."""
    return ModelConfig(
        vocab_size=64,
        seq_len=8,
        d_model=16,
        d_ff=32,
        n_heads=2,
        n_layers=2,
        mechanism=Mechanism.CREDAL,
        seed=3,
    )


@pytest.fixture
def small_spec() -> DatasetSpec:
    return DatasetSpec(seq_len=8, vocab=64, n_train_id=40, n_eval=20, seed=7)

