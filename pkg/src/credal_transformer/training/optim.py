"""Adam optimizer and cross-entropy loss."""

from __future__ import annotations

from dataclasses import dataclass
import logging
import math
from typing import TYPE_CHECKING

import numpy as np

from credal_transformer.core.tensor import Tensor, logsumexp_rows
from credal_transformer.errors import InputError, TrainingDivergedError
from credal_transformer.model.encoder import ModelParams

if TYPE_CHECKING:
    from collections.abc import Mapping

    from numpy.typing import ArrayLike, NDArray

    from credal_transformer.config.model import TrainConfig

logger = logging.getLogger(__name__)


def cross_entropy_loss(logits: Tensor, labels: ArrayLike) -> Tensor:
    """Mean of -log softmax(logits)[label], computed as logsumexp - logit[label].

    Args:
        logits: (n_classes,) for one example or (B, n_classes) for a batch
        labels: Class index, or (B,) class indices

    Raises:
        InputError: If a label is outside [0, n_classes) or shapes disagree
    """
    n_classes = logits.shape[-1]
    y = np.asarray(labels)
    if y.shape != logits.shape[:-1]:
        raise InputError(f"labels {y.shape} do not match logits {logits.shape}")
    if not np.issubdtype(y.dtype, np.integer) or np.any((y < 0) | (y >= n_classes)):
        raise InputError(f"labels must be integers in [0, {n_classes}), got {y.tolist()}")
    one_hot = np.eye(n_classes, dtype=logits.dtype)[y]
    picked = (logits * one_hot).sum(axis=-1)
    return (logsumexp_rows(logits) - picked).mean()


@dataclass(frozen=True)
class AdamState:
    """First and second moment estimates per parameter."""

    m: dict[str, NDArray[np.floating]]
    v: dict[str, NDArray[np.floating]]

    @classmethod
    def zeros_like(cls, params: ModelParams) -> AdamState:
        return cls(
            m={name: np.zeros_like(t.values) for name, t in params.items()},
            v={name: np.zeros_like(t.values) for name, t in params.items()},
        )


def adam_step(
    params: ModelParams,
    grads: Mapping[str, NDArray[np.floating]],
    state: AdamState,
    t: int,
    config: TrainConfig,
) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update (t is 1-based).

    Returns:
        New parameters (fresh leaves) and new moment estimates

    Raises:
        TrainingDivergedError: If any gradient is non-finite; the message names them
        InputError: If t < 1 or gradient shapes do not match
    """
    if t < 1:
        raise InputError(f"Adam step counter starts at 1, got {t}")
    bad = [name for name, g in grads.items() if not np.all(np.isfinite(g))]
    if bad:
        raise TrainingDivergedError(f"non-finite gradients at step {t} in: {', '.join(bad)}")

    b1, b2 = config.beta1, config.beta2
    correction1 = 1.0 - b1**t
    correction2 = 1.0 - b2**t
    step_size = config.learning_rate / correction1
    sqrt_c2 = math.sqrt(correction2)

    new_tensors, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise InputError(f"gradient for {name} has shape {g.shape}, expected {p.shape}")
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        update = step_size * m / (np.sqrt(v) / sqrt_c2 + config.eps)
        new_tensors[name] = Tensor(p.values - update, requires_grad=True, dtype=p.dtype)
        new_m[name], new_v[name] = m, v
    return ModelParams(new_tensors), AdamState(m=new_m, v=new_v)
