"""Closed-form FLOP counts for standard and credal attention.

Convention: each scalar add, mul, div, exp or log costs 1 FLOP and an
(m×k)·(k×n) matmul costs 2mkn. Per head and sequence of length L:

    scores         2·L·d_k·L
    scaling        L²
    normalization  L·(L exp + (L-1) add + L div)
    context        2·L·L·d_v

The credal mechanism shares all of these. On top it pays, per head:

    evidence       2·L²   (α = e + 1: the score's exp is the softmax's exp,
                           plus log1p and add in the log-domain form)
    vacuity        2·L    (L/α0 as one exp and one sub per row; α0 is the
                           row sum the normalization already computed)

so the relative difference is about 1/(2·d_k + 2) of the per-head work and
shrinks further once projections and feed-forward blocks are counted.
"""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING

from credal_transformer.config.model import Mechanism
from credal_transformer.schemas.bench import FlopModel, ModelFlops

if TYPE_CHECKING:
    from credal_transformer.config.model import ModelConfig

logger = logging.getLogger(__name__)

GELU_FLOPS = 5  # scale, erf, add, halve, multiply


def matmul_flops(m: int, k: int, n: int) -> int:
    """2mkn."""
    return 2 * m * k * n


def count_attention_flops(
    L: int,
    d_k: int,
    d_v: int,
    n_heads: int,
    mechanism: Mechanism,
    d_model: int | None = None,
) -> FlopModel:
    """FLOPs of one multi-head attention block on one sequence.

    Args:
        L: Sequence length
        d_k: Query/key width per head
        d_v: Value width per head
        n_heads: Number of heads
        mechanism: standard or credal
        d_model: Input/output width of the projections (default n_heads·d_v)

    Raises:
        ValueError: If a dimension is not positive
    """
    if min(L, d_k, d_v, n_heads) < 1 or (d_model is not None and d_model < 1):
        raise ValueError("all dimensions must be positive")
    width = n_heads * d_v if d_model is None else d_model
    credal = mechanism is Mechanism.CREDAL
    return FlopModel(
        mechanism=mechanism,
        seq_len=L,
        d_k=d_k,
        d_v=d_v,
        n_heads=n_heads,
        d_model=width,
        projections=2 * matmul_flops(L, width, n_heads * d_k)
        + matmul_flops(L, width, n_heads * d_v)
        + matmul_flops(L, n_heads * d_v, width),
        scores=n_heads * matmul_flops(L, d_k, L),
        scaling=n_heads * L * L,
        normalization=n_heads * L * (L + (L - 1) + L),
        evidence=n_heads * 2 * L * L if credal else 0,
        vacuity=n_heads * 2 * L if credal else 0,
        context=n_heads * matmul_flops(L, L, d_v),
    )


def layer_norm_flops(d: int) -> int:
    """Per row: mean d, centering d, variance 2d, eps/sqrt/reciprocal 3, normalize, scale, shift."""
    return d + d + 2 * d + 3 + 3 * d


def count_model_flops(
    config: ModelConfig, mechanism: Mechanism | None = None, batch_size: int = 1
) -> ModelFlops:
    """FLOPs of one encoder forward pass over `batch_size` sequences."""
    mechanism = config.mechanism if mechanism is None else mechanism
    L, d, d_ff, layers = config.seq_len, config.d_model, config.d_ff, config.n_layers
    attn = count_attention_flops(L, config.d_head, config.d_head, config.n_heads, mechanism, d)
    ffn = (
        matmul_flops(L, d, d_ff)
        + L * d_ff
        + GELU_FLOPS * L * d_ff
        + matmul_flops(L, d_ff, d)
        + L * d
    )
    flops = ModelFlops(
        mechanism=mechanism,
        batch_size=batch_size,
        positional=batch_size * L * d,
        attention=batch_size * layers * attn.total,
        layer_norm=batch_size * layers * 2 * L * layer_norm_flops(d),
        feed_forward=batch_size * layers * ffn,
        residual=batch_size * layers * 2 * L * d,
        pooling=batch_size * L * d,
        head=batch_size * (matmul_flops(1, d, config.n_classes) + config.n_classes),
    )
    logger.debug("%s model: %.4f GFLOPs per forward", mechanism, flops.gflops)
    return flops


def relative_flop_difference(standard: int, credal: int) -> float:
    """(credal - standard) / standard, as a fraction."""
    return (credal - standard) / standard


def attention_flop_difference(
    L: int, d_k: int, d_v: int, n_heads: int, d_model: int | None = None
) -> float:
    """Relative FLOP difference of one attention block, credal vs standard."""
    std = count_attention_flops(L, d_k, d_v, n_heads, Mechanism.STANDARD, d_model)
    cam = count_attention_flops(L, d_k, d_v, n_heads, Mechanism.CREDAL, d_model)
    return relative_flop_difference(std.total, cam.total)
