"""Transformer encoder classifier with standard or credal attention.

Pipeline: token embedding + sinusoidal positions, `n_layers` pre-norm blocks
(multi-head attention + residual, GELU feed-forward + residual), mean-pool
over positions, linear classifier head.

In credal mode every block records its per-head, per-query vacuity; the
model-level uncertainty is the mean of the final block's vacuities over
heads and positions.

Parameter names (also the checkpoint keys):

    embedding.weight               (vocab_size, d_model)
    layers.{i}.ln1.scale / .bias   (d_model,)
    layers.{i}.attn.wq / .wk / .wv (n_heads, d_model, d_head)
    layers.{i}.attn.wo             (n_heads, d_head, d_model)
    layers.{i}.ln2.scale / .bias   (d_model,)
    layers.{i}.ffn.w1              (d_model, d_ff)
    layers.{i}.ffn.b1              (d_ff,)
    layers.{i}.ffn.w2              (d_ff, d_model)
    layers.{i}.ffn.b2              (d_model,)
    head.weight                    (d_model, n_classes)
    head.bias                      (n_classes,)
"""

from __future__ import annotations

from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from functools import lru_cache
import logging
import math
from typing import TYPE_CHECKING

import numpy as np

from credal_transformer.config.model import Mechanism, ModelConfig
from credal_transformer.core.attention import (
    AttentionParams,
    check_head_split,
    init_attention_params,
    multi_head_attention,
)
from credal_transformer.core.tensor import Tensor, embedding, gelu, layer_norm, matmul
from credal_transformer.errors import ConfigError, ContractError, InputError
from credal_transformer.utils.seeding import rng_for

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, DTypeLike, NDArray

logger = logging.getLogger(__name__)


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Canonical parameter names and shapes, in initialization order."""
    d, h, dk = config.d_model, config.n_heads, config.d_head
    shapes: dict[str, tuple[int, ...]] = {"embedding.weight": (config.vocab_size, d)}
    for i in range(config.n_layers):
        p = f"layers.{i}"
        shapes |= {
            f"{p}.ln1.scale": (d,),
            f"{p}.ln1.bias": (d,),
            f"{p}.attn.wq": (h, d, dk),
            f"{p}.attn.wk": (h, d, dk),
            f"{p}.attn.wv": (h, d, dk),
            f"{p}.attn.wo": (h, dk, d),
            f"{p}.ln2.scale": (d,),
            f"{p}.ln2.bias": (d,),
            f"{p}.ffn.w1": (d, config.d_ff),
            f"{p}.ffn.b1": (config.d_ff,),
            f"{p}.ffn.w2": (config.d_ff, d),
            f"{p}.ffn.b2": (d,),
        }
    shapes |= {"head.weight": (d, config.n_classes), "head.bias": (config.n_classes,)}
    return shapes


class ModelParams(Mapping[str, Tensor]):
    """Named, ordered collection of learnable tensors."""

    def __init__(self, tensors: Mapping[str, Tensor]) -> None:
        self._tensors = dict(tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def __repr__(self) -> str:
        return f"ModelParams({len(self)} tensors, {self.n_parameters} values)"

    @property
    def n_parameters(self) -> int:
        return sum(t.size for t in self._tensors.values())

    @property
    def dtype(self) -> np.dtype:
        return next(iter(self._tensors.values())).dtype

    def replace(self, updates: Mapping[str, Tensor]) -> ModelParams:
        """Copy with some tensors swapped out.

        Raises:
            KeyError: If an update names an unknown parameter
        """
        unknown = set(updates) - set(self._tensors)
        if unknown:
            raise KeyError(f"unknown parameters: {sorted(unknown)}")
        return ModelParams({**self._tensors, **updates})

    def flatten(self) -> NDArray[np.floating]:
        """All values concatenated in parameter order."""
        return np.concatenate([t.values.ravel() for t in self._tensors.values()])

    def unflatten(self, flat: NDArray[np.floating]) -> ModelParams:
        """Inverse of `flatten`; the result's tensors require gradients."""
        if flat.size != self.n_parameters:
            raise InputError(f"flat vector has {flat.size} values, expected {self.n_parameters}")
        tensors, offset = {}, 0
        for name, t in self._tensors.items():
            chunk = flat[offset : offset + t.size].reshape(t.shape)
            tensors[name] = Tensor(chunk, requires_grad=True, dtype=t.dtype)
            offset += t.size
        return ModelParams(tensors)

    def locate(self, flat_index: int) -> tuple[str, tuple[int, ...]]:
        """Parameter name and element index of a position in `flatten()`."""
        offset = 0
        for name, t in self._tensors.items():
            if flat_index < offset + t.size:
                return name, tuple(int(i) for i in np.unravel_index(flat_index - offset, t.shape))
            offset += t.size
        raise IndexError(f"flat index {flat_index} out of range ({self.n_parameters})")

    def astype(self, dtype: DTypeLike) -> ModelParams:
        return ModelParams(
            {name: Tensor(t.values, requires_grad=True, dtype=dtype) for name, t in self.items()}
        )

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.zero_grad()

    def grads(self) -> dict[str, NDArray[np.floating]]:
        """Accumulated gradients, zeros where none flowed."""
        return {
            name: np.zeros_like(t.values) if t.grad is None else t.grad
            for name, t in self._tensors.items()
        }

    def all_finite(self) -> bool:
        return all(bool(np.all(np.isfinite(t.values))) for t in self._tensors.values())

    def attention(self, layer: int) -> AttentionParams:
        p = f"layers.{layer}.attn"
        return AttentionParams(
            wq=self[f"{p}.wq"], wk=self[f"{p}.wk"], wv=self[f"{p}.wv"], wo=self[f"{p}.wo"]
        )


def init_params(config: ModelConfig, dtype: DTypeLike = np.float64) -> ModelParams:
    """Seeded initialization.

    Linear weights ~ N(0, 1/fan_in), embedding ~ N(0, 1), layer-norm scale 1
    and every bias 0. Same seed, same bits.

    Raises:
        ConfigError: If d_model is not divisible by n_heads
    """
    check_head_split(config.d_model, config.n_heads)
    rng = rng_for(config.seed, "params")
    d, d_ff = config.d_model, config.d_ff

    def normal(shape: tuple[int, ...], fan_in: int) -> Tensor:
        values = rng.normal(0.0, 1.0 / math.sqrt(fan_in), shape)
        return Tensor(values, requires_grad=True, dtype=dtype)

    def const(shape: tuple[int, ...], value: float) -> Tensor:
        return Tensor(np.full(shape, value), requires_grad=True, dtype=dtype)

    tensors = {"embedding.weight": normal((config.vocab_size, d), 1)}
    for i in range(config.n_layers):
        p = f"layers.{i}"
        attn = init_attention_params(d, config.n_heads, rng)
        tensors |= {
            f"{p}.ln1.scale": const((d,), 1.0),
            f"{p}.ln1.bias": const((d,), 0.0),
            f"{p}.attn.wq": Tensor(attn.wq.values, requires_grad=True, dtype=dtype),
            f"{p}.attn.wk": Tensor(attn.wk.values, requires_grad=True, dtype=dtype),
            f"{p}.attn.wv": Tensor(attn.wv.values, requires_grad=True, dtype=dtype),
            f"{p}.attn.wo": Tensor(attn.wo.values, requires_grad=True, dtype=dtype),
            f"{p}.ln2.scale": const((d,), 1.0),
            f"{p}.ln2.bias": const((d,), 0.0),
            f"{p}.ffn.w1": normal((d, d_ff), d),
            f"{p}.ffn.b1": const((d_ff,), 0.0),
            f"{p}.ffn.w2": normal((d_ff, d), d_ff),
            f"{p}.ffn.b2": const((d,), 0.0),
        }
    tensors |= {
        "head.weight": normal((d, config.n_classes), d),
        "head.bias": const((config.n_classes,), 0.0),
    }
    params = ModelParams(tensors)
    logger.debug("Initialized %d parameters (seed %d)", params.n_parameters, config.seed)
    return params


@lru_cache(maxsize=32)
def sinusoidal_positions(length: int, d_model: int) -> NDArray[np.float64]:
    """PE[pos, 2k] = sin(pos / 10000^(2k/d)), PE[pos, 2k+1] = cos(same)."""
    pos = np.arange(length, dtype=np.float64)[:, None]
    rate = np.power(10000.0, -np.arange(0, d_model, 2, dtype=np.float64) / d_model)
    table = np.zeros((length, d_model))
    table[:, 0::2] = np.sin(pos * rate)
    table[:, 1::2] = np.cos(pos * rate[: d_model // 2])
    table.flags.writeable = False
    return table


@dataclass(frozen=True)
class BatchOutput:
    """Forward result for a (B, L) token batch."""

    logits: Tensor
    layer_vacuity: list[Tensor] = field(default_factory=list)
    mechanism: Mechanism = Mechanism.CREDAL


@dataclass(frozen=True)
class ClassifierOutput:
    """Forward result for one sequence: logits (n_classes,), per-layer vacuity (n_heads, L)."""

    logits: Tensor
    layer_vacuity: list[Tensor] = field(default_factory=list)
    mechanism: Mechanism = Mechanism.CREDAL


def validate_tokens(config: ModelConfig, tokens: ArrayLike) -> NDArray[np.int64]:
    """Tokens as a (B, L) integer array.

    Raises:
        InputError: On a wrong shape, non-integer ids or ids outside [0, vocab_size)
    """
    arr = np.asarray(tokens)
    if arr.ndim != 2 or arr.shape[1] != config.seq_len:  # noqa: PLR2004
        raise InputError(f"expected tokens of shape (B, {config.seq_len}), got {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        raise InputError(f"token ids must be integers, got dtype {arr.dtype}")
    if arr.size and (arr.min() < 0 or arr.max() >= config.vocab_size):
        raise InputError(
            f"token ids must lie in [0, {config.vocab_size}), got range [{arr.min()}, {arr.max()}]"
        )
    return arr.astype(np.int64, copy=False)


def forward_batch(params: ModelParams, config: ModelConfig, tokens: ArrayLike) -> BatchOutput:
    """Encode and classify a batch of sequences.

    Args:
        params: Model parameters
        config: Architecture (must match `params`)
        tokens: Integer array of shape (B, L)

    Returns:
        Logits (B, n_classes) and, in credal mode, one (B, n_heads, L) vacuity per layer

    Raises:
        InputError: If tokens are malformed or out of range
    """
    ids = validate_tokens(config, tokens)
    positions = sinusoidal_positions(config.seq_len, config.d_model)
    x = embedding(params["embedding.weight"], ids) + positions

    layer_vacuity: list[Tensor] = []
    for i in range(config.n_layers):
        p = f"layers.{i}"
        h = layer_norm(x, params[f"{p}.ln1.scale"], params[f"{p}.ln1.bias"])
        attn = multi_head_attention(
            h, params.attention(i), config.mechanism, evidence=config.evidence
        )
        x = x + attn.output
        if attn.head_vacuity is not None:
            layer_vacuity.append(attn.head_vacuity)

        h = layer_norm(x, params[f"{p}.ln2.scale"], params[f"{p}.ln2.bias"])
        hidden = gelu(matmul(h, params[f"{p}.ffn.w1"]) + params[f"{p}.ffn.b1"])
        x = x + (matmul(hidden, params[f"{p}.ffn.w2"]) + params[f"{p}.ffn.b2"])

    pooled = x.mean(axis=-2)
    logits = matmul(pooled, params["head.weight"]) + params["head.bias"]
    return BatchOutput(logits=logits, layer_vacuity=layer_vacuity, mechanism=config.mechanism)


def forward_classify(
    params: ModelParams, config: ModelConfig, tokens: ArrayLike
) -> ClassifierOutput:
    """Single-sequence view of `forward_batch` (tokens of shape (L,))."""
    arr = np.asarray(tokens)
    if arr.ndim != 1:
        raise InputError(f"expected one sequence of shape ({config.seq_len},), got {arr.shape}")
    batch = forward_batch(params, config, arr[None, :])
    return ClassifierOutput(
        logits=batch.logits.reshape(config.n_classes),
        layer_vacuity=[u.reshape(u.shape[1:]) for u in batch.layer_vacuity],
        mechanism=batch.mechanism,
    )


def uncertainty_tensor(output: BatchOutput | ClassifierOutput) -> Tensor:
    """Differentiable final-layer vacuity mean over heads and positions.

    Shape () for a ClassifierOutput, (B,) for a BatchOutput.

    Raises:
        ContractError: In standard mode or for a model without encoder layers
    """
    if output.mechanism is not Mechanism.CREDAL:
        raise ContractError("uncertainty requires credal mode")
    if not output.layer_vacuity:
        raise ContractError("model has no encoder layers, so no vacuity to read out")
    final = output.layer_vacuity[-1]
    return final.mean(axis=(-2, -1))


def model_uncertainty(output: ClassifierOutput) -> float:
    """Mean vacuity of the final layer over all heads and query positions.

    Example:
        >>> out = forward_classify(params, config, tokens)
        >>> model_uncertainty(out)
        # value in (0, 1)
    """
    return float(uncertainty_tensor(output).values)


def batch_uncertainty(output: BatchOutput) -> NDArray[np.float64]:
    """Per-sequence `model_uncertainty` for a batch."""
    return np.asarray(uncertainty_tensor(output).values, dtype=np.float64)


def check_params(params: ModelParams, config: ModelConfig) -> None:
    """Raise ConfigError unless `params` has exactly the shapes `config` implies."""
    expected = parameter_shapes(config)
    if list(params) != list(expected):
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        raise ConfigError(f"parameter names differ: missing {missing}, unexpected {extra}")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ConfigError(f"{name} has shape {params[name].shape}, expected {shape}")
