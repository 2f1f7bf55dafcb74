"""Mini-batch training of the encoder classifier on ID data."""

from __future__ import annotations

from dataclasses import dataclass
import logging
from typing import TYPE_CHECKING

import numpy as np

from credal_transformer.config.model import Mechanism
from credal_transformer.core.tensor import backward, no_grad
from credal_transformer.data.synth import label_vector, token_matrix
from credal_transformer.errors import InputError, TrainingDivergedError
from credal_transformer.model.encoder import (
    batch_uncertainty,
    forward_batch,
    init_params,
)
from credal_transformer.schemas.data import SequenceKind
from credal_transformer.schemas.reports import EpochRecord
from credal_transformer.training.optim import AdamState, adam_step, cross_entropy_loss
from credal_transformer.utils.seeding import rng_for

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from numpy.typing import ArrayLike, NDArray

    from credal_transformer.config.model import ModelConfig, TrainConfig
    from credal_transformer.model.encoder import ModelParams
    from credal_transformer.schemas.data import LabeledSequence

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainResult:
    """Final parameters plus one log record per epoch."""

    params: ModelParams
    log: list[EpochRecord]


def train(
    model_config: ModelConfig,
    train_config: TrainConfig,
    dataset: Sequence[LabeledSequence],
    params: ModelParams | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> TrainResult:
    """Minimize mean cross-entropy with Adam.

    Batches are drawn from a fresh permutation each epoch, seeded by
    (train_config.seed, epoch), so identical seeds give identical runs.

    Args:
        model_config: Architecture
        train_config: Optimizer and loop settings
        dataset: ID sequences only
        params: Starting point (default: `init_params(model_config)`)
        on_epoch: Called with each epoch's record as soon as it is complete

    Returns:
        TrainResult with the final parameters and the per-epoch log

    Raises:
        InputError: If the dataset is empty or contains non-ID sequences
        TrainingDivergedError: If the loss or a gradient becomes non-finite
    """
    if any(s.kind is not SequenceKind.ID for s in dataset):
        raise InputError("training data must contain only ID sequences")
    if train_config.epochs > 0 and not dataset:
        raise InputError("training data is empty")

    params = init_params(model_config) if params is None else params
    if train_config.epochs == 0:
        return TrainResult(params=params, log=[])

    tokens = token_matrix(dataset)
    labels = label_vector(dataset)
    credal = model_config.mechanism is Mechanism.CREDAL and model_config.n_layers > 0
    state = AdamState.zeros_like(params)
    step = 0
    log: list[EpochRecord] = []

    logger.info(
        "Training %s model (%d parameters) on %d sequences for %d epochs",
        model_config.mechanism,
        params.n_parameters,
        len(dataset),
        train_config.epochs,
    )
    for epoch in range(1, train_config.epochs + 1):
        order = rng_for(train_config.seed, "epoch", epoch).permutation(len(dataset))
        loss_sum, correct, u_sum = 0.0, 0, 0.0
        n_batches = 0
        for start in range(0, len(order), train_config.batch_size):
            idx = order[start : start + train_config.batch_size]
            output = forward_batch(params, model_config, tokens[idx])
            loss = cross_entropy_loss(output.logits, labels[idx])
            loss_value = loss.item()
            if not np.isfinite(loss_value):
                raise TrainingDivergedError(f"loss became {loss_value} at epoch {epoch}")
            backward(loss)

            step += 1
            params, state = adam_step(params, params.grads(), state, step, train_config)

            loss_sum += loss_value
            n_batches += 1
            correct += int(np.sum(np.argmax(output.logits.values, axis=-1) == labels[idx]))
            if credal:
                u_sum += float(batch_uncertainty(output).sum())

        record = EpochRecord(
            epoch=epoch,
            loss=loss_sum / n_batches,
            accuracy=correct / len(dataset),
            mean_U=u_sum / len(dataset) if credal else None,
        )
        log.append(record)
        if on_epoch is not None:
            on_epoch(record)
        logger.info(
            "Epoch %d/%d: loss %.4f, accuracy %.3f%s",
            epoch,
            train_config.epochs,
            record.loss,
            record.accuracy,
            "" if record.mean_U is None else f", mean U {record.mean_U:.4f}",
        )
    return TrainResult(params=params, log=log)


def predict(
    params: ModelParams,
    model_config: ModelConfig,
    tokens: ArrayLike,
    batch_size: int = 256,
) -> tuple[NDArray[np.float64], NDArray[np.float64] | None]:
    """Logits (N, n_classes) and, in credal mode, model uncertainty (N,), without a tape."""
    ids = np.asarray(tokens)
    logits, uncertainty = [], []
    credal = model_config.mechanism is Mechanism.CREDAL and model_config.n_layers > 0
    with no_grad():
        for start in range(0, len(ids), batch_size):
            output = forward_batch(params, model_config, ids[start : start + batch_size])
            logits.append(np.asarray(output.logits.values, dtype=np.float64))
            if credal:
                uncertainty.append(batch_uncertainty(output))
    if not logits:
        return np.zeros((0, model_config.n_classes)), (np.zeros(0) if credal else None)
    return np.concatenate(logits), (np.concatenate(uncertainty) if credal else None)
