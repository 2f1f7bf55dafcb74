"""Uncertainty evaluation across the ID, OOD and Nonsense sets."""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING

import numpy as np

from credal_transformer.config.model import Mechanism
from credal_transformer.data.synth import label_vector, token_matrix
from credal_transformer.errors import ContractError
from credal_transformer.schemas.data import SequenceKind
from credal_transformer.schemas.reports import KindUncertainty, UncertaintyReport
from credal_transformer.training.train import predict

if TYPE_CHECKING:
    from collections.abc import Mapping, Sequence

    from credal_transformer.config.model import ModelConfig
    from credal_transformer.model.encoder import ModelParams
    from credal_transformer.schemas.data import LabeledSequence

logger = logging.getLogger(__name__)

KIND_ORDER = (SequenceKind.ID, SequenceKind.OOD, SequenceKind.NONSENSE)


def evaluate_uncertainty(
    params: ModelParams,
    model_config: ModelConfig,
    eval_sets: Mapping[SequenceKind, Sequence[LabeledSequence]],
    seed: int = 0,
) -> UncertaintyReport:
    """Mean model uncertainty per data kind, plus accuracy on the ID set.

    Args:
        params: Trained parameters
        model_config: Architecture; must be credal with at least one layer
        eval_sets: Sequences per kind (ID required for the accuracy)
        seed: Root seed, recorded in the report

    Raises:
        ContractError: For a standard-mode model or missing ID set
    """
    if model_config.mechanism is not Mechanism.CREDAL:
        raise ContractError("uncertainty requires credal mode")
    if model_config.n_layers == 0:
        raise ContractError("model has no encoder layers, so no vacuity to read out")
    if SequenceKind.ID not in eval_sets:
        raise ContractError("evaluation needs an ID set")

    rows: list[KindUncertainty] = []
    id_accuracy = float("nan")
    for kind in KIND_ORDER:
        sequences = eval_sets.get(kind)
        if not sequences:
            continue
        logits, uncertainty = predict(params, model_config, token_matrix(sequences))
        if uncertainty is None:
            raise ContractError("credal forward returned no vacuity")
        rows.append(
            KindUncertainty(
                kind=kind,
                mean_U=float(np.mean(uncertainty)),
                std_U=float(np.std(uncertainty)),
                n=len(sequences),
            )
        )
        if kind is SequenceKind.ID:
            id_accuracy = float(np.mean(np.argmax(logits, axis=-1) == label_vector(sequences)))
        logger.info("%s: mean U %.4f over %d sequences", kind, rows[-1].mean_U, len(sequences))

    return UncertaintyReport(seed=seed, rows=rows, id_accuracy=id_accuracy)
