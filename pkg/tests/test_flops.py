"""Tests for the analytic FLOP model."""

from __future__ import annotations

import pytest

from credal_transformer.bench.flops import (
    attention_flop_difference,
    count_attention_flops,
    count_model_flops,
    layer_norm_flops,
    matmul_flops,
    relative_flop_difference,
)
from credal_transformer.config.model import BenchConfig, Mechanism


def test_matmul_convention():
    assert matmul_flops(3, 4, 5) == 120


def test_score_matmul_single_head():
    flops = count_attention_flops(16, 8, 8, 1, Mechanism.STANDARD)
    assert flops.scores == 2 * 16 * 8 * 16 == 4096


class TestAttentionFlops:
    def test_components(self):
        L, d_k, h = 16, 8, 2
        flops = count_attention_flops(L, d_k, d_k, h, Mechanism.CREDAL)
        assert flops.d_model == h * d_k
        assert flops.scaling == h * L * L
        assert flops.normalization == h * L * (3 * L - 1)
        assert flops.context == h * 2 * L * L * d_k
        assert flops.evidence == h * 2 * L * L
        assert flops.vacuity == h * 2 * L

    def test_standard_has_no_credal_terms(self):
        flops = count_attention_flops(16, 8, 8, 2, Mechanism.STANDARD)
        assert flops.evidence == 0
        assert flops.vacuity == 0

    def test_matmul_terms_identical_across_mechanisms(self):
        std = count_attention_flops(64, 16, 16, 4, Mechanism.STANDARD, 64)
        cam = count_attention_flops(64, 16, 16, 4, Mechanism.CREDAL, 64)
        assert std.matmul_terms == cam.matmul_terms
        assert cam.total - std.total == cam.evidence + cam.vacuity

    def test_total_serialized(self):
        flops = count_attention_flops(4, 2, 2, 1, Mechanism.CREDAL)
        assert flops.model_dump()["total"] == flops.total

    def test_non_positive_dimension(self):
        with pytest.raises(ValueError, match="positive"):
            count_attention_flops(0, 8, 8, 1, Mechanism.STANDARD)

    def test_parity_at_benchmark_size(self):
        diff = attention_flop_difference(128, 64, 64, 4, 256)
        assert 0.0 < diff < 0.005

    def test_difference_shrinks_with_head_width(self):
        narrow = attention_flop_difference(128, 8, 8, 4)
        wide = attention_flop_difference(128, 64, 64, 4)
        assert wide < narrow


class TestModelFlops:
    def test_benchmark_config_parity(self):
        config = BenchConfig().model_config_for(Mechanism.STANDARD)
        std = count_model_flops(config, Mechanism.STANDARD)
        cam = count_model_flops(config, Mechanism.CREDAL)
        diff = relative_flop_difference(std.total, cam.total)
        assert 0.0 < diff < 0.005
        assert std.feed_forward == cam.feed_forward

    def test_scales_with_batch(self):
        config = BenchConfig().model_config_for(Mechanism.CREDAL)
        one = count_model_flops(config, batch_size=1)
        four = count_model_flops(config, batch_size=4)
        assert four.total == 4 * one.total
        assert one.mechanism is Mechanism.CREDAL

    def test_gflops(self):
        config = BenchConfig().model_config_for(Mechanism.STANDARD)
        flops = count_model_flops(config)
        assert flops.gflops == pytest.approx(flops.total / 1e9)


def test_layer_norm_flops():
    assert layer_norm_flops(4) == 7 * 4 + 3
