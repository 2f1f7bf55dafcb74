"""Tests for standard and credal attention."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import special

from credal_transformer.config.model import EvidenceFunction, Mechanism
from credal_transformer.core.attention import (
    AttentionInputs,
    AttentionParams,
    ScoreMatrix,
    check_head_split,
    concentration,
    credal_attention,
    credal_attention_from_scores,
    evidence_from_scores,
    expected_attention,
    init_attention_params,
    multi_head_attention,
    standard_attention,
    vacuity,
)
from credal_transformer.core.gradcheck import finite_difference_check
from credal_transformer.core.tensor import ComputationGraph, Tensor
from credal_transformer.errors import ConfigError, ContractError, DimensionError


def naive_credal(s, mask=None):
    """Linear-domain reference: alpha = exp(s) + 1 over unmasked keys."""
    keep = np.ones_like(s, dtype=bool) if mask is None else np.broadcast_to(mask, s.shape)
    alpha = np.where(keep, np.exp(s) + 1.0, 0.0)
    alpha0 = alpha.sum(axis=-1)
    return alpha / alpha0[..., None], keep.sum(axis=-1) / alpha0


def _credal(s, mask=None, evidence=EvidenceFunction.EXP):
    L = np.shape(s)[-1]
    V = Tensor(np.eye(L))
    return credal_attention_from_scores(ScoreMatrix(s=Tensor(s), mask=mask), V, evidence=evidence)


def _standard(s, mask=None):
    L = np.shape(s)[-1]
    return standard_attention(ScoreMatrix(s=Tensor(s), mask=mask), Tensor(np.eye(L)))


def _ones(*shape):
    return Tensor(np.ones(shape))


class TestConcentration:
    def test_known_row(self):
        conc = concentration(Tensor([[math.log(3.0), 0.0]]))
        np.testing.assert_allclose(conc.alpha, [[4.0, 2.0]])
        np.testing.assert_allclose(conc.alpha0, [6.0])
        np.testing.assert_allclose(expected_attention(conc).values, [[2 / 3, 1 / 3]])

    def test_large_scores_stay_finite_in_log_domain(self):
        conc = concentration(Tensor([[800.0, 0.0]]))
        assert np.all(np.isfinite(conc.log_alpha.values))
        assert conc.log_alpha0.item() == pytest.approx(800.0)

    def test_masked_keys_have_no_concentration(self):
        mask = np.array([[True, False], [True, True]])
        conc = concentration(Tensor([[1.0, 5.0], [1.0, 5.0]]), mask)
        assert conc.alpha[0, 1] == 0.0
        np.testing.assert_allclose(conc.effective_length, [1.0, 2.0])


class TestCredalValues:
    def test_expected_attention_for_large_scores(self):
        out = _credal(np.array([[12.0, 10.0]]))
        alpha = np.exp([12.0, 10.0]) + 1.0
        np.testing.assert_allclose(out.a_hat.values[0], alpha / alpha.sum(), rtol=1e-12)
        # Large scores recover the softmax up to the "+1" of each α.
        np.testing.assert_allclose(out.a_hat.values[0], [0.880797, 0.119203], atol=2.6e-5)

    def test_expected_attention_for_small_scores(self):
        out = _credal(np.array([[2.0, 0.0]]))
        expected = np.array([math.e**2 + 1.0, 2.0]) / (math.e**2 + 3.0)
        np.testing.assert_allclose(out.a_hat.values[0], expected, rtol=1e-12)
        # Flatter than softmax([2, 0]) = [0.880797, 0.119203].
        assert out.a_hat.values[0, 0] < 0.880797

    def test_vacuity_when_all_scores_are_twenty(self):
        out = _credal(np.full((1, 3), 20.0))
        assert out.vacuity.item() == pytest.approx(1.0 / (math.exp(20.0) + 1.0), rel=1e-12)
        assert out.vacuity.item() == pytest.approx(2.06e-9, rel=1e-2)

    def test_vacuity_of_a_single_key(self):
        for s in (-30.0, -1.0, 0.0, 2.5, 40.0):
            out = _credal(np.array([[s]]))
            assert out.a_hat.item() == 1.0
            assert out.vacuity.item() == pytest.approx(special.expit(-s), rel=1e-12)

    def test_matches_linear_domain_reference(self, rng):
        s = rng.uniform(-6.0, 6.0, size=(5, 4, 6, 6))
        mask = rng.random((6, 6)) < 0.7
        mask[:, 0] = True
        out = _credal(s, mask)
        a_ref, u_ref = naive_credal(s, mask)
        np.testing.assert_allclose(out.a_hat.values, a_ref, atol=1e-10)
        np.testing.assert_allclose(out.vacuity.values, u_ref, atol=1e-10)

    def test_rows_sum_to_one_under_random_masks(self, rng):
        n, L = 1000, 8
        s = rng.normal(scale=10.0, size=(n, L, L))
        mask = rng.random((n, L, L)) < 0.6
        mask[np.arange(n)[:, None], np.arange(L), rng.integers(0, L, size=(n, L))] = True
        out = _credal(s, mask)
        a_hat = out.a_hat.values
        np.testing.assert_allclose(a_hat.sum(axis=-1), 1.0, atol=1e-10)
        assert np.all(a_hat[~mask] == 0.0)
        assert np.all(a_hat[mask] > 0.0)
        u = out.vacuity.values
        assert np.all((u > 0) & (u < 1))

    def test_expected_attention_is_softmax_of_log_concentration(self, rng):
        mask = rng.random((6, 6)) < 0.7
        mask[:, 2] = True
        out = _credal(rng.normal(scale=4.0, size=(3, 6, 6)), mask)
        np.testing.assert_allclose(
            out.a_hat.values, special.softmax(out.log_alpha.values, axis=-1), atol=1e-12
        )
        np.testing.assert_allclose(
            out.vacuity.values, out.effective_length / out.alpha0, rtol=1e-12
        )

    def test_scores_order_is_preserved(self, rng):
        s = rng.normal(scale=3.0, size=(200, 10))
        a_hat = _credal(s).a_hat.values
        np.testing.assert_array_equal(a_hat.argmax(axis=-1), s.argmax(axis=-1))
        score_order = np.sign(s[:, :, None] - s[:, None, :])
        weight_order = np.sign(a_hat[:, :, None] - a_hat[:, None, :])
        np.testing.assert_array_equal(weight_order, score_order)

    def test_extreme_scores_do_not_overflow(self):
        out = _credal(np.array([[700.0, -700.0, 0.0], [-700.0, -700.0, -700.0]]))
        for t in (out.a_hat, out.vacuity, out.log_alpha0):
            assert np.all(np.isfinite(t.values))
        assert out.vacuity.values[1] == pytest.approx(1.0)

    def test_uniform_shift_lowers_vacuity(self, rng):
        s = rng.normal(size=(4, 5))
        base = _credal(s).vacuity.values
        previous = base
        for c in (0.5, 1.0, 5.0):
            shifted = _credal(s + c).vacuity.values
            assert np.all(shifted < previous)
            previous = shifted

    @pytest.mark.parametrize("L", [1, 2, 7, 16])
    def test_large_shift_recovers_softmax(self, rng, L):
        s = rng.uniform(-3.0, 3.0, size=(50, L))
        shifted = _credal(s + 20.0)
        np.testing.assert_allclose(shifted.a_hat.values, special.softmax(s, axis=-1), atol=1e-6)
        assert np.all(shifted.vacuity.values < 1e-7)

    @pytest.mark.parametrize("L", [1, 3, 16])
    def test_no_evidence_gives_full_vacuity(self, L):
        out = _credal(np.full((L, L), -30.0))
        np.testing.assert_allclose(out.vacuity.values, 1.0, atol=1e-10)
        np.testing.assert_allclose(out.a_hat.values, 1.0 / L, atol=1e-12)

    def test_context_is_weighted_values(self, rng):
        Q, K, V = (Tensor(rng.normal(size=(4, 3))) for _ in range(3))
        out = credal_attention(AttentionInputs(Q, K, V))
        np.testing.assert_allclose(out.context.values, out.a_hat.values @ V.values)

    def test_batched_inputs_match_per_row_calls(self, rng):
        Q, K, V = (rng.normal(size=(3, 5, 4)) for _ in range(3))
        batched = credal_attention(AttentionInputs(Tensor(Q), Tensor(K), Tensor(V)))
        for b in range(3):
            single = credal_attention(AttentionInputs(Tensor(Q[b]), Tensor(K[b]), Tensor(V[b])))
            np.testing.assert_allclose(batched.vacuity.values[b], single.vacuity.values)


class TestMasks:
    def test_masked_keys_get_exactly_zero_weight(self):
        mask = np.array([[True, False, True]] * 3)
        out = _credal(np.full((3, 3), 5.0), mask)
        assert np.all(out.a_hat.values[:, 1] == 0.0)
        std = _standard(np.full((3, 3), 5.0), mask)
        assert np.all(std.a.values[:, 1] == 0.0)

    def test_masked_keys_leave_vacuity_unchanged(self):
        mask = np.array([[True, True, False]] * 3)
        masked = _credal(np.array([[1.0, -2.0, 50.0]] * 3), mask)
        unmasked = _credal(np.array([[1.0, -2.0]] * 2))
        assert masked.vacuity.values[0] == pytest.approx(unmasked.vacuity.values[0], rel=1e-12)

    def test_fully_masked_row_is_rejected(self):
        mask = np.ones((3, 3), dtype=bool)
        mask[1] = False
        with pytest.raises(ContractError):
            _credal(np.zeros((3, 3)), mask)
        with pytest.raises(ContractError):
            _standard(np.zeros((3, 3)), mask)

    def test_wrong_mask_shape(self):
        with pytest.raises(DimensionError):
            _credal(np.zeros((3, 3)), np.ones((2, 3), dtype=bool))

    def test_vacuity_needs_an_attendable_key(self):
        with pytest.raises(ContractError):
            vacuity(Tensor([0.0]), np.array([0.0]))


class TestInputs:
    def test_mismatched_dims(self):
        with pytest.raises(DimensionError):
            AttentionInputs(_ones(3, 4), _ones(3, 5), _ones(3, 2))
        with pytest.raises(DimensionError):
            AttentionInputs(_ones(3, 4), _ones(2, 4), _ones(2, 2))

    def test_one_dimensional_inputs(self):
        with pytest.raises(DimensionError):
            AttentionInputs(Tensor(np.ones(4)), Tensor(np.ones(4)), Tensor(np.ones(4)))


class TestEvidenceFunctions:
    def test_exp_evidence_is_the_score(self):
        s = Tensor([[0.3, -1.2]])
        assert evidence_from_scores(ScoreMatrix(s=s)) is s

    @pytest.mark.parametrize(
        ("evidence", "fn"),
        [
            (EvidenceFunction.SOFTPLUS, lambda s: np.logaddexp(0.0, s)),
            (EvidenceFunction.RELU, lambda s: np.maximum(s, 0.0)),
        ],
    )
    def test_alternative_maps(self, evidence, fn, rng):
        s = rng.normal(scale=3.0, size=(4, 5))
        out = _credal(s, evidence=evidence)
        alpha = fn(s) + 1.0
        np.testing.assert_allclose(out.a_hat.values, alpha / alpha.sum(-1, keepdims=True))
        np.testing.assert_allclose(out.vacuity.values, 5.0 / alpha.sum(-1))


class TestGradients:
    def test_weighted_expected_attention(self):
        weights = np.array([[0.7, -1.3]])

        def f(t):
            return (_credal_tensor(t).a_hat * weights).sum()

        assert finite_difference_check(f, np.array([[math.log(3.0), 0.0]])) < 1e-6

    def test_vacuity_gradient_is_negative_for_every_score(self, rng):
        s = Tensor(rng.normal(size=(1, 4)), requires_grad=True)
        out = _credal_tensor(s)
        out.vacuity.sum().backward()
        assert np.all(s.grad < 0)

    def test_masked_scores_get_no_gradient(self, rng):
        mask = np.array([[True, False, True]] * 3)
        s = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
        out = _credal_tensor(s, mask)
        (out.a_hat.sum() + out.vacuity.sum()).backward()
        assert np.all(s.grad[:, 1] == 0.0)
        assert np.all(np.isfinite(s.grad))

    def test_expected_attention_reuses_the_vacuity_normalizer(self, rng):
        s = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
        out = _credal_tensor(s)
        graph = ComputationGraph(out.a_hat.sum())
        assert any(t is out.log_alpha0 for t in graph.order)
        assert "softmax_rows" not in {t._node.op for t in graph.order if t._node is not None}

    def test_full_credal_attention(self, rng):
        K = Tensor(rng.normal(size=(4, 3)))
        V = Tensor(rng.normal(size=(4, 2)))

        def f(q):
            out = credal_attention(AttentionInputs(q, K, V))
            return out.context.sum() + out.vacuity.sum()

        assert finite_difference_check(f, rng.normal(size=(4, 3))) < 1e-6


def _credal_tensor(s, mask=None):
    L = s.shape[-1]
    return credal_attention_from_scores(ScoreMatrix(s=s, mask=mask), Tensor(np.eye(L)))


def _identity_params(d):
    eye = np.eye(d)[None]
    return AttentionParams(Tensor(eye), Tensor(eye), Tensor(eye), Tensor(eye))


class TestMultiHead:
    def test_head_split(self):
        assert check_head_split(8, 2) == 4
        with pytest.raises(ConfigError):
            check_head_split(8, 3)

    def test_param_shapes(self, rng):
        params = init_attention_params(8, 2, rng)
        assert params.wq.shape == (2, 8, 4)
        assert params.wo.shape == (2, 4, 8)

    def test_single_identity_head_is_plain_credal_attention(self, rng):
        x = Tensor(rng.normal(size=(5, 4)))
        out = multi_head_attention(x, _identity_params(4), Mechanism.CREDAL)
        single = credal_attention(AttentionInputs(x, x, x))
        np.testing.assert_allclose(out.output.values, single.context.values, atol=1e-12)
        np.testing.assert_allclose(out.head_vacuity.values[0], single.vacuity.values)

    def test_output_shapes(self, rng):
        params = init_attention_params(8, 2, rng)
        out = multi_head_attention(Tensor(rng.normal(size=(3, 5, 8))), params, Mechanism.CREDAL)
        assert out.output.shape == (3, 5, 8)
        assert out.head_vacuity.shape == (3, 2, 5)
        std = multi_head_attention(Tensor(rng.normal(size=(5, 8))), params, Mechanism.STANDARD)
        assert std.head_vacuity is None

    def test_wrong_width(self, rng):
        params = init_attention_params(8, 2, rng)
        with pytest.raises(DimensionError):
            multi_head_attention(Tensor(np.ones((5, 6))), params, Mechanism.CREDAL)

    def test_large_score_offset_makes_mechanisms_agree(self, rng):
        # A constant coordinate c adds c²/sqrt(d) to every score.
        d = 4
        x = rng.normal(scale=0.5, size=(6, d))
        x[:, -1] = math.sqrt(20.0 * math.sqrt(d))
        params = _identity_params(d)
        credal = multi_head_attention(Tensor(x), params, Mechanism.CREDAL)
        standard = multi_head_attention(Tensor(x), params, Mechanism.STANDARD)
        np.testing.assert_allclose(credal.output.values, standard.output.values, atol=1e-5)
