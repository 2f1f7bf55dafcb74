"""Finite-difference check of the full model's gradients."""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING

import numpy as np

from credal_transformer.config.model import Mechanism
from credal_transformer.core.gradcheck import compare_gradients
from credal_transformer.errors import ContractError
from credal_transformer.model.encoder import (
    ModelParams,
    forward_batch,
    init_params,
    uncertainty_tensor,
)
from credal_transformer.schemas.reports import GradCheckReport, ParamError
from credal_transformer.training.optim import cross_entropy_loss
from credal_transformer.utils.seeding import rng_for

if TYPE_CHECKING:
    from credal_transformer.config.model import ModelConfig
    from credal_transformer.core.tensor import Tensor

logger = logging.getLogger(__name__)

MAX_LAYERS = 2


def model_loss(
    params: ModelParams,
    model_config: ModelConfig,
    tokens: np.ndarray,
    labels: np.ndarray,
) -> Tensor:
    """Cross-entropy, plus the mean model uncertainty in credal mode.

    The vacuity term is there so the check also covers the uncertainty path.
    """
    output = forward_batch(params, model_config, tokens)
    loss = cross_entropy_loss(output.logits, labels)
    if model_config.mechanism is Mechanism.CREDAL and model_config.n_layers > 0:
        loss = loss + uncertainty_tensor(output).mean()
    return loss


def gradient_check_model(
    model_config: ModelConfig,
    tolerance: float = 1e-4,
    step: float = 1e-5,
    n_params: int = 200,
    batch_size: int = 4,
    seed: int = 0,
    n_worst: int = 10,
) -> GradCheckReport:
    """Compare tape gradients of the model loss with central differences.

    A random subset of parameter components (sampled without replacement
    across all tensors) is perturbed one at a time, in float64.

    Args:
        model_config: Small model to check (at most 2 layers)
        tolerance: Pass iff the max relative error is strictly below this
        step: Finite-difference step h
        n_params: Number of components to check
        batch_size: Random sequences in the loss
        seed: Seed for the inputs and the component sample
        n_worst: How many of the worst components to list in the report

    Raises:
        ContractError: If the model has more than 2 layers
    """
    if model_config.n_layers > MAX_LAYERS:
        raise ContractError(f"gradient check is meant for <= {MAX_LAYERS} layers")

    params = init_params(model_config, dtype=np.float64)
    rng = rng_for(seed, "gradcheck", model_config.mechanism.value)
    tokens = rng.integers(0, model_config.vocab_size, (batch_size, model_config.seq_len))
    labels = rng.integers(0, model_config.n_classes, batch_size)

    flat = params.flatten()
    indices = np.sort(rng.choice(flat.size, size=min(n_params, flat.size), replace=False))
    shapes = [(name, t.shape, t.size) for name, t in params.items()]

    def loss_of(theta: Tensor) -> Tensor:
        tensors, offset = {}, 0
        for name, shape, size in shapes:
            tensors[name] = theta[offset : offset + size].reshape(shape)
            offset += size
        return model_loss(ModelParams(tensors), model_config, tokens, labels)

    logger.info(
        "Gradient check (%s): %d of %d components, h=%g",
        model_config.mechanism,
        indices.size,
        flat.size,
        step,
    )
    comparison = compare_gradients(loss_of, flat, h=step, indices=indices)
    errors = comparison.relative_error
    worst = np.argsort(-errors, kind="stable")[:n_worst]

    offenders = []
    for k in worst:
        name, index = params.locate(int(comparison.indices[k]))
        offenders.append(
            ParamError(
                name=name,
                index=list(index),
                analytic=float(comparison.analytic[k]),
                numeric=float(comparison.numeric[k]),
                relative_error=float(errors[k]),
            )
        )

    max_error = comparison.max_relative_error
    report = GradCheckReport(
        mechanism=model_config.mechanism,
        n_checked=int(indices.size),
        step=step,
        tolerance=tolerance,
        max_relative_error=max_error,
        passed=max_error < tolerance,
        worst=offenders,
    )
    if report.passed:
        logger.info(
            "Gradient check (%s) passed: max relative error %.3e", report.mechanism, max_error
        )
    else:
        logger.warning(
            "Gradient check (%s) failed: max relative error %.3e >= %g; worst %s%s",
            report.mechanism,
            max_error,
            tolerance,
            offenders[0].name if offenders else "-",
            offenders[0].index if offenders else "",
        )
    return report
