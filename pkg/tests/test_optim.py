"""Tests for the loss and the Adam optimizer."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import special

from credal_transformer.config.model import TrainConfig
from credal_transformer.core.gradcheck import finite_difference_check
from credal_transformer.core.tensor import Tensor, backward
from credal_transformer.errors import InputError, TrainingDivergedError
from credal_transformer.model.encoder import init_params
from credal_transformer.training.optim import AdamState, adam_step, cross_entropy_loss


class TestCrossEntropy:
    def test_uniform_logits(self):
        assert cross_entropy_loss(Tensor([0.0, 0.0]), 0).item() == pytest.approx(math.log(2.0))

    def test_confident_logits(self):
        loss = cross_entropy_loss(Tensor([10.0, -10.0]), 0).item()
        assert loss == pytest.approx(math.log1p(math.exp(-20.0)), rel=1e-4)
        assert loss == pytest.approx(2.06e-9, rel=1e-2)

    def test_no_overflow(self):
        assert cross_entropy_loss(Tensor([1000.0, -1000.0]), 1).item() == pytest.approx(2000.0)

    def test_gradient_is_softmax_minus_one_hot(self):
        logits = Tensor([0.5, -1.0, 2.0], requires_grad=True)
        backward(cross_entropy_loss(logits, 2))
        expected = special.softmax([0.5, -1.0, 2.0]) - np.array([0.0, 0.0, 1.0])
        np.testing.assert_allclose(logits.grad, expected, atol=1e-12)

    def test_batch_is_mean(self, rng):
        x = rng.normal(size=(4, 3))
        y = np.array([0, 2, 1, 2])
        batch = cross_entropy_loss(Tensor(x), y).item()
        single = [cross_entropy_loss(Tensor(x[i]), y[i]).item() for i in range(4)]
        assert batch == pytest.approx(np.mean(single))
        assert finite_difference_check(lambda t: cross_entropy_loss(t, y), x) < 1e-6

    @pytest.mark.parametrize("label", [-1, 2, 0.5])
    def test_label_out_of_range(self, label):
        with pytest.raises(InputError):
            cross_entropy_loss(Tensor([0.0, 0.0]), label)

    def test_label_shape_mismatch(self):
        with pytest.raises(InputError):
            cross_entropy_loss(Tensor(np.zeros((3, 2))), [0, 1])


class TestAdam:
    @pytest.fixture
    def params(self, tiny_config):
        return init_params(tiny_config)

    def test_zero_gradient_leaves_params_unchanged(self, params):
        grads = {name: np.zeros(t.shape) for name, t in params.items()}
        updated, _ = adam_step(params, grads, AdamState.zeros_like(params), 1, TrainConfig())
        np.testing.assert_array_equal(updated.flatten(), params.flatten())

    def test_first_step_moves_by_learning_rate(self, params):
        config = TrainConfig(learning_rate=1e-3)
        grads = {name: np.full(t.shape, 0.5) for name, t in params.items()}
        updated, state = adam_step(params, grads, AdamState.zeros_like(params), 1, config)
        np.testing.assert_allclose(params.flatten() - updated.flatten(), 1e-3, rtol=1e-6)
        np.testing.assert_allclose(state.m["head.bias"], 0.05)

    def test_negative_gradient_moves_up(self, params):
        grads = {name: np.full(t.shape, -2.0) for name, t in params.items()}
        updated, _ = adam_step(params, grads, AdamState.zeros_like(params), 1, TrainConfig())
        assert np.all(updated.flatten() > params.flatten())

    def test_updated_params_are_fresh_leaves(self, params):
        grads = {name: np.ones(t.shape) for name, t in params.items()}
        updated, _ = adam_step(params, grads, AdamState.zeros_like(params), 1, TrainConfig())
        assert all(t.requires_grad and t.grad is None for t in updated.values())

    def test_deterministic(self, params, rng):
        grads = {name: rng.normal(size=t.shape) for name, t in params.items()}
        a, _ = adam_step(params, grads, AdamState.zeros_like(params), 3, TrainConfig())
        b, _ = adam_step(params, grads, AdamState.zeros_like(params), 3, TrainConfig())
        assert a.flatten().tobytes() == b.flatten().tobytes()

    def test_nan_gradient_names_the_parameter(self, params):
        grads = {name: np.zeros(t.shape) for name, t in params.items()}
        grads["layers.0.ffn.w1"] = np.full(params["layers.0.ffn.w1"].shape, np.nan)
        with pytest.raises(TrainingDivergedError, match=r"layers\.0\.ffn\.w1"):
            adam_step(params, grads, AdamState.zeros_like(params), 1, TrainConfig())

    def test_step_counter_starts_at_one(self, params):
        grads = {name: np.zeros(t.shape) for name, t in params.items()}
        with pytest.raises(InputError):
            adam_step(params, grads, AdamState.zeros_like(params), 0, TrainConfig())

    def test_gradient_shape_mismatch(self, params):
        grads = {name: np.zeros(t.shape) for name, t in params.items()}
        grads["head.bias"] = np.zeros(5)
        with pytest.raises(InputError):
            adam_step(params, grads, AdamState.zeros_like(params), 1, TrainConfig())
