"""Training log, uncertainty report and gradient-check report schemas."""

from __future__ import annotations

from pydantic import BaseModel, Field

from credal_transformer.config.model import Mechanism
from credal_transformer.errors import ContractError
from credal_transformer.schemas.data import SequenceKind


class EpochRecord(BaseModel):
    """One line of the training log."""

    epoch: int = Field(description="1-based epoch number")
    loss: float = Field(description="Mean cross-entropy over the epoch's batches")
    accuracy: float = Field(description="Training accuracy over the epoch")
    mean_U: float | None = Field(
        default=None, description="Mean final-layer vacuity (credal mode only)"
    )


class KindUncertainty(BaseModel):
    """Vacuity statistics of one evaluation set; one row of the uncertainty CSV."""

    kind: SequenceKind = Field(description="ID, OOD or Nonsense")
    mean_U: float = Field(description="Mean model uncertainty")
    std_U: float = Field(description="Population standard deviation of model uncertainty")
    n: int = Field(description="Number of evaluated sequences")


class UncertaintyReport(BaseModel):
    """Mean model uncertainty per data kind, plus ID accuracy."""

    seed: int = Field(description="Root seed of the run")
    rows: list[KindUncertainty] = Field(description="One entry per kind, ID/OOD/Nonsense order")
    id_accuracy: float = Field(description="Accuracy on the ID evaluation split")

    def row(self, kind: SequenceKind) -> KindUncertainty:
        """Statistics for one kind.

        Raises:
            ContractError: If the kind was not evaluated
        """
        for r in self.rows:
            if r.kind is kind:
                return r
        raise ContractError(f"report has no {kind} row")

    def mean_u(self, kind: SequenceKind) -> float:
        return self.row(kind).mean_U

    def ordering_holds(self, min_gap: float = 0.2) -> bool:
        """mean_U(ID) < mean_U(OOD) < mean_U(Nonsense), each step ≥ `min_gap` relative.

        The relative gap is measured against the smaller of the two values.
        """
        u_id = self.mean_u(SequenceKind.ID)
        u_ood = self.mean_u(SequenceKind.OOD)
        u_non = self.mean_u(SequenceKind.NONSENSE)
        return u_ood >= u_id * (1.0 + min_gap) and u_non >= u_ood * (1.0 + min_gap)


class AbstentionPoint(BaseModel):
    """Selective-prediction statistics at one threshold τ."""

    threshold: float = Field(description="Abstain iff model uncertainty > threshold")
    abstention_rate: float = Field(description="Fraction of examples abstained on")
    coverage: float = Field(description="Fraction answered (1 - abstention_rate)")
    selective_accuracy: float | None = Field(
        default=None, description="Accuracy on answered examples (None if none answered)"
    )


class AbstentionSummary(BaseModel):
    """Abstention rate per kind at the run's chosen threshold."""

    threshold: float = Field(description="Chosen τ")
    kind: SequenceKind = Field(description="Evaluation set")
    abstention_rate: float = Field(description="Fraction abstained on")


class ParamError(BaseModel):
    """One checked parameter component."""

    name: str = Field(description="Parameter name")
    index: list[int] = Field(description="Element index within the parameter")
    analytic: float = Field(description="Gradient from the tape")
    numeric: float = Field(description="Central-difference gradient")
    relative_error: float = Field(description="|a - n| / (|a| + |n| + 1e-12)")


class GradCheckReport(BaseModel):
    """Result of a model-level finite-difference check."""

    mechanism: Mechanism = Field(description="Attention mechanism checked")
    n_checked: int = Field(description="Number of parameter components compared")
    step: float = Field(description="Finite-difference step h")
    tolerance: float = Field(description="Pass threshold on the max relative error")
    max_relative_error: float = Field(description="Worst relative error seen")
    passed: bool = Field(description="max_relative_error < tolerance")
    worst: list[ParamError] = Field(
        default_factory=list, description="Worst components, largest error first"
    )
