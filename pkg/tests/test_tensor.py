"""Tests for the autodiff tensor core."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import special

from credal_transformer.core import tensor as T
from credal_transformer.core.gradcheck import finite_difference_check
from credal_transformer.core.tensor import ComputationGraph, Tensor, backward, no_grad
from credal_transformer.errors import ContractError, DimensionError


class TestConstruction:
    def test_values_are_copied_and_read_only(self):
        source = np.array([1.0, 2.0])
        t = Tensor(source)
        source[0] = 99.0
        assert t.values[0] == 1.0
        with pytest.raises(ValueError):
            t.values[0] = 5.0

    def test_integer_input_becomes_float64(self):
        assert Tensor([1, 2, 3]).dtype == np.float64

    def test_item_requires_single_element(self):
        assert Tensor(3.5).item() == 3.5
        with pytest.raises(ContractError):
            Tensor([1.0, 2.0]).item()

    def test_float32_stays_float32_with_python_scalars(self):
        t = Tensor(np.ones(3, dtype=np.float32))
        assert (t * 2.0 + 1.0).dtype == np.float32


class TestMatmul:
    def test_scalar_product(self):
        assert T.matmul(Tensor([[1.0]]), Tensor([[2.0]])).values.tolist() == [[2.0]]

    def test_identity(self):
        b = Tensor([[3.0, 4.0], [5.0, 6.0]])
        assert T.matmul(Tensor(np.eye(2)), b).values.tolist() == [[3.0, 4.0], [5.0, 6.0]]

    def test_two_by_two(self):
        c = T.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[5.0, 6.0], [7.0, 8.0]]))
        assert c.values.tolist() == [[19.0, 22.0], [43.0, 50.0]]

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
            T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_backward_is_transposed_products(self, rng):
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
        backward(T.matmul(a, b).sum())
        np.testing.assert_allclose(a.grad, np.ones((3, 2)) @ b.values.T)
        np.testing.assert_allclose(b.grad, a.values.T @ np.ones((3, 2)))


class TestSoftmax:
    def test_symmetric_row(self):
        np.testing.assert_allclose(T.softmax_rows(Tensor([[0.0, 0.0]])).values, [[0.5, 0.5]])

    def test_large_equal_row_does_not_overflow(self):
        np.testing.assert_allclose(
            T.softmax_rows(Tensor([[1000.0, 1000.0]])).values, [[0.5, 0.5]]
        )

    def test_known_value(self):
        out = T.softmax_rows(Tensor([[2.0, 0.0]])).values
        np.testing.assert_allclose(out, [[0.880797, 0.119203]], atol=1e-6)

    def test_rows_sum_to_one_and_shift_invariant(self, rng):
        x = rng.normal(scale=5.0, size=(50, 7))
        out = T.softmax_rows(Tensor(x)).values
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-12)
        shifted = T.softmax_rows(Tensor(x + 3.7)).values
        np.testing.assert_allclose(shifted, out, atol=1e-12)

    def test_sum_of_softmax_has_zero_gradient(self):
        x = Tensor([1.3, -0.4], requires_grad=True)
        backward(T.softmax_rows(x).sum())
        np.testing.assert_allclose(x.grad, [0.0, 0.0], atol=1e-12)


class TestSoftplus:
    def test_zero(self):
        assert T.softplus(Tensor(0.0)).item() == pytest.approx(math.log(2.0))

    def test_large_positive_is_identity(self):
        assert T.softplus(Tensor(100.0)).item() == pytest.approx(100.0, abs=1e-12)

    def test_large_negative_is_representable(self):
        assert T.softplus(Tensor(-100.0)).item() == pytest.approx(3.72e-44, rel=1e-2)

    def test_no_overflow_at_700(self):
        out = T.softplus(Tensor([-700.0, 700.0])).values
        assert np.all(np.isfinite(out))

    def test_bounds(self, rng):
        x = rng.uniform(-50, 50, size=1000)
        y = T.softplus(Tensor(x)).values
        gap = y - np.maximum(x, 0.0)
        assert np.all(y > 0)
        assert np.all((gap >= 0) & (gap <= math.log(2.0) + 1e-15))


class TestLogSumExp:
    def test_values(self):
        assert T.logsumexp_rows(Tensor([0.0, 0.0])).item() == pytest.approx(math.log(2.0))
        assert T.logsumexp_rows(Tensor([1000.0, 1000.0])).item() == pytest.approx(
            1000.0 + math.log(2.0)
        )
        assert T.logsumexp_rows(Tensor([3.0])).item() == 3.0

    def test_drops_last_axis(self):
        assert T.logsumexp_rows(Tensor(np.zeros((4, 3)))).shape == (4,)

    def test_bounds(self, rng):
        x = rng.normal(scale=4.0, size=(100, 6))
        y = T.logsumexp_rows(Tensor(x)).values
        row_max = x.max(axis=-1)
        assert np.all(y >= row_max)
        assert np.all(y <= row_max + math.log(6) + 1e-12)


class TestScalarResults:
    """Ops on 0-d tensors and full reductions still hold read-only ndarrays."""

    @pytest.mark.parametrize(
        "fn",
        [
            lambda t: t * 3.0,
            lambda t: t - 1.0,
            lambda t: -t,
            T.exp,
            T.softplus,
            T.log1p,
            T.gelu,
        ],
    )
    def test_elementwise_on_zero_dim(self, fn):
        out = fn(Tensor(2.0, requires_grad=True))
        assert isinstance(out.values, np.ndarray)
        assert out.shape == ()
        assert not out.values.flags.writeable

    def test_ops_after_full_reduction(self):
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        loss = T.softplus(x.sum() * 0.5).mean()
        assert isinstance(loss.values, np.ndarray)
        backward(loss)
        assert isinstance(x.grad, np.ndarray)
        assert x.grad.shape == (3,)
        np.testing.assert_allclose(x.grad, 0.5 * special.expit(3.0))

    def test_scalar_product_gradient(self):
        x = Tensor(2.0, requires_grad=True)
        backward(x * 3.0)
        assert isinstance(x.grad, np.ndarray)
        assert x.grad == pytest.approx(3.0)


class TestBackward:
    def test_identity_loss(self):
        x = Tensor(2.0, requires_grad=True)
        backward(x)
        assert x.grad == pytest.approx(1.0)

    def test_non_scalar_loss_rejected(self):
        with pytest.raises(ContractError):
            backward(Tensor([1.0, 2.0], requires_grad=True) * 2.0)

    def test_repeated_calls_accumulate(self):
        x = Tensor(3.0, requires_grad=True)
        backward(x * x)
        backward(x * x)
        assert x.grad == pytest.approx(12.0)
        x.zero_grad()
        assert x.grad is None

    def test_fan_out_is_additive(self):
        x = Tensor(2.0, requires_grad=True)
        y = x * 3.0
        backward(y + y * y)
        # d/dx (3x + 9x²) = 3 + 18x
        assert x.grad == pytest.approx(39.0)

    def test_graph_visits_each_node_once(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        y = T.exp(x)
        z = (y * y + y).sum()
        graph = ComputationGraph(z)
        assert len(graph) == len({id(n) for n in graph.order})
        assert graph.leaves == [x]

    def test_no_grad_records_nothing(self):
        x = Tensor(1.0, requires_grad=True)
        with no_grad():
            y = x * 2.0
        assert not y.requires_grad
        assert T.is_grad_enabled()

    def test_broadcast_gradients_reduce_to_operand_shape(self, rng):
        x = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=(3,)), requires_grad=True)
        backward((x + b).sum())
        np.testing.assert_allclose(b.grad, np.full(3, 4.0))


def _scalar(fn):
    return lambda t: fn(t).sum()


@pytest.mark.parametrize(
    ("name", "fn", "low", "high"),
    [
        ("exp", T.exp, -3, 3),
        ("log", T.log, 0.5, 3),
        ("log1p", T.log1p, -0.5, 3),
        ("softplus", T.softplus, -3, 3),
        ("gelu", T.gelu, -3, 3),
        ("softmax_rows", lambda t: T.softmax_rows(t) * np.arange(1.0, 5.0), -3, 3),
        ("logsumexp_rows", T.logsumexp_rows, -3, 3),
        ("mean_axis", lambda t: t.mean(axis=0) * t.mean(axis=0), -3, 3),
        ("transpose", lambda t: T.transpose(t) * np.arange(12.0).reshape(4, 3), -3, 3),
        ("reshape", lambda t: t.reshape(2, 6) * np.arange(12.0).reshape(2, 6), -3, 3),
        ("getitem", lambda t: t[1:, ::2] * t[1:, ::2], -3, 3),
    ],
)
def test_op_gradients_match_finite_differences(name, fn, low, high, rng):
    x = rng.uniform(low, high, size=(3, 4))
    assert finite_difference_check(_scalar(fn), x) < 1e-5, name


def test_layer_norm_gradients(rng):
    x0 = rng.normal(size=(3, 5))
    scale = rng.normal(size=5)
    bias = rng.normal(size=5)
    weights = rng.normal(size=(3, 5))

    def wrt_x(t):
        return (T.layer_norm(t, Tensor(scale), Tensor(bias)) * weights).sum()

    def wrt_scale(t):
        return (T.layer_norm(Tensor(x0), t, Tensor(bias)) * weights).sum()

    assert finite_difference_check(wrt_x, x0) < 1e-5
    assert finite_difference_check(wrt_scale, scale) < 1e-5


def test_matmul_and_division_gradients(rng):
    b = Tensor(rng.normal(size=(4, 2)))
    denom = Tensor(rng.uniform(1.0, 2.0, size=(3, 4)))

    def product(t):
        return (T.matmul(t, b) * T.matmul(t, b)).sum()

    def quotient(t):
        return (t / denom).sum() + (denom / (t * t + 1.0)).sum()

    assert finite_difference_check(product, rng.normal(size=(3, 4))) < 1e-5
    assert finite_difference_check(quotient, rng.normal(size=(3, 4))) < 1e-5


def test_embedding_gradient_scatters_rows():
    weight = Tensor(np.arange(12.0).reshape(4, 3), requires_grad=True)
    idx = np.array([[0, 2], [2, 2]])
    out = T.embedding(weight, idx)
    assert out.shape == (2, 2, 3)
    backward(out.sum())
    np.testing.assert_allclose(weight.grad[:, 0], [1.0, 0.0, 3.0, 0.0])


def test_where_mask_blocks_gradient():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    keep = np.array([True, False, True])
    out = T.where_mask(x, keep, -np.inf)
    assert out.values[1] == -np.inf
    backward(T.where_mask(x, keep, 0.0).sum())
    np.testing.assert_allclose(x.grad, [1.0, 0.0, 1.0])


def test_where_mask_rejects_enlarging_mask():
    with pytest.raises(DimensionError):
        T.where_mask(Tensor(np.zeros(3)), np.ones((2, 3), dtype=bool), 0.0)
