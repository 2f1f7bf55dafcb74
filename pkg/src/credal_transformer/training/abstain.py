"""Selective prediction: answer only when model uncertainty is low enough."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from credal_transformer.errors import ContractError, InputError
from credal_transformer.schemas.data import SequenceKind
from credal_transformer.schemas.reports import AbstentionPoint

if TYPE_CHECKING:
    from numpy.typing import ArrayLike

    from credal_transformer.schemas.reports import UncertaintyReport


@dataclass(frozen=True)
class Answer:
    label: int


@dataclass(frozen=True)
class Abstain:
    uncertainty: float


Decision = Answer | Abstain


def abstain_decision(logits: ArrayLike, model_uncertainty: float, threshold: float) -> Decision:
    """Abstain iff `model_uncertainty` > `threshold`, else answer the argmax class.

    Ties in the logits go to the lowest class index.

    Raises:
        ContractError: If threshold is not in (0, 1)
    """
    if not 0.0 < threshold < 1.0:
        raise ContractError(f"threshold must lie in (0, 1), got {threshold}")
    if model_uncertainty > threshold:
        return Abstain(uncertainty=float(model_uncertainty))
    return Answer(label=int(np.argmax(np.asarray(logits))))


def abstention_curve(
    uncertainties: ArrayLike, correct: ArrayLike | None, thresholds: ArrayLike
) -> list[AbstentionPoint]:
    """Abstention rate, coverage and selective accuracy for each threshold.

    Args:
        uncertainties: Model uncertainty per example
        correct: Whether the argmax prediction is right, per example (None if unlabeled)
        thresholds: τ values to sweep (any order; output follows it)

    Raises:
        InputError: If uncertainties and correct differ in length
    """
    u = np.asarray(uncertainties, dtype=np.float64)
    ok = None if correct is None else np.asarray(correct, dtype=bool)
    if ok is not None and u.shape != ok.shape:
        raise InputError(f"{u.size} uncertainties vs {ok.size} outcomes")
    points = []
    for tau in np.asarray(thresholds, dtype=np.float64):
        answered = u <= tau
        n_answered = int(answered.sum())
        rate = 1.0 - n_answered / u.size if u.size else 0.0
        points.append(
            AbstentionPoint(
                threshold=float(tau),
                abstention_rate=rate,
                coverage=1.0 - rate,
                selective_accuracy=(
                    float(ok[answered].mean()) if ok is not None and n_answered else None
                ),
            )
        )
    return points


def abstention_rate(uncertainties: ArrayLike, threshold: float) -> float:
    """Fraction of examples with uncertainty above `threshold`."""
    u = np.asarray(uncertainties, dtype=np.float64)
    return float(np.mean(u > threshold)) if u.size else 0.0


def midpoint_threshold(report: UncertaintyReport) -> float:
    """τ halfway between mean U on ID and on Nonsense."""
    return 0.5 * (report.mean_u(SequenceKind.ID) + report.mean_u(SequenceKind.NONSENSE))


def sweep_thresholds(n_points: int = 21) -> np.ndarray:
    """Evenly spaced τ over [0, 1]."""
    return np.linspace(0.0, 1.0, n_points)
