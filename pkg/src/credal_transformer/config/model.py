"""Component configurations: model, training, data, benchmark, gradient check."""

from __future__ import annotations

from enum import StrEnum
from typing import Literal, Self

from pydantic import BaseModel, ConfigDict, Field, model_validator


class Mechanism(StrEnum):
    """Attention normalization used inside every encoder block."""

    STANDARD = "standard"
    CREDAL = "credal"


class EvidenceFunction(StrEnum):
    """Map from raw score s to non-negative evidence e."""

    EXP = "exp"
    SOFTPLUS = "softplus"
    RELU = "relu"


class ModelConfig(BaseModel):
    """Architecture hyperparameters of the encoder classifier."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    vocab_size: int = Field(default=64, ge=1, description="Number of token ids")
    seq_len: int = Field(default=16, ge=1, description="Sequence length L")
    d_model: int = Field(default=32, ge=1, description="Residual stream width")
    d_ff: int = Field(default=64, ge=1, description="Hidden width of the feed-forward block")
    n_heads: int = Field(default=4, ge=1, description="Attention heads per layer")
    n_layers: int = Field(default=2, ge=0, description="Encoder blocks (0 = embedding only)")
    n_classes: int = Field(default=2, ge=1, description="Classifier outputs")
    mechanism: Mechanism = Field(default=Mechanism.CREDAL, description="standard or credal")
    evidence: EvidenceFunction = Field(
        default=EvidenceFunction.EXP, description="Score-to-evidence map (credal only)"
    )
    seed: int = Field(default=0, ge=0, description="Parameter initialization seed")

    @model_validator(mode="after")
    def _check_heads(self) -> Self:
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}"
            )
        return self

    @property
    def d_head(self) -> int:
        """Per-head query/key/value width."""
        return self.d_model // self.n_heads

    @classmethod
    def desk(cls, mechanism: Mechanism = Mechanism.CREDAL, seed: int = 0) -> ModelConfig:
        """Default desk-scale encoder (trains in seconds on one CPU core)."""
        return cls(mechanism=mechanism, seed=seed)

    @classmethod
    def for_gradcheck(
        cls, mechanism: Mechanism = Mechanism.CREDAL, seed: int = 0
    ) -> ModelConfig:
        """Small 2-layer model for finite-difference checks."""
        return cls(
            vocab_size=64,
            seq_len=8,
            d_model=16,
            d_ff=32,
            n_heads=2,
            n_layers=2,
            mechanism=mechanism,
            seed=seed,
        )


class TrainConfig(BaseModel):
    """Optimizer and loop settings (Adam on mean cross-entropy)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    epochs: int = Field(default=20, ge=0, description="Passes over the training set")
    batch_size: int = Field(default=32, ge=1, description="Sequences per optimizer step")
    learning_rate: float = Field(default=1e-3, ge=0.0, description="Adam step size")
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0, description="Adam first-moment decay")
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0, description="Adam second-moment decay")
    eps: float = Field(default=1e-8, gt=0.0, description="Adam denominator epsilon")
    seed: int = Field(default=0, ge=0, description="Shuffling seed")


class DatasetSpec(BaseModel):
    """Sizes and noise of the synthetic ID / OOD / Nonsense sets."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    seq_len: int = Field(default=16, ge=1, description="Sequence length L")
    vocab: int = Field(default=64, ge=1, description="Vocabulary size (>= 64 for Nonsense)")
    n_train_id: int = Field(default=2000, ge=0, description="ID training sequences")
    n_eval: int = Field(default=500, ge=0, description="Evaluation sequences per kind")
    noise_prob: float = Field(
        default=0.15, ge=0.0, le=1.0, description="Per-token replacement probability for ID"
    )
    seed: int = Field(default=0, ge=0, description="Generation seed")


class BenchConfig(BaseModel):
    """Dimensions and methodology of the standard-vs-credal benchmark."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    seq_len: int = Field(default=128, ge=1, description="Sequence length L")
    d_model: int = Field(default=256, ge=1, description="Residual stream width")
    d_ff: int = Field(default=512, ge=1, description="Feed-forward width")
    n_heads: int = Field(default=4, ge=1, description="Attention heads")
    n_layers: int = Field(default=2, ge=1, description="Encoder blocks")
    vocab_size: int = Field(default=64, ge=1, description="Vocabulary size")
    n_classes: int = Field(default=2, ge=1, description="Classifier outputs")
    batch_size: int = Field(default=1, ge=1, description="Sequences per timed call")
    reps: int = Field(default=30, ge=1, description="Timed repetitions (>= 30 enforced)")
    warmup: int = Field(default=5, ge=0, description="Discarded warmup iterations (>= 5)")
    threads: int = Field(default=1, ge=1, description="BLAS threads; 1 for acceptance numbers")
    dtype: Literal["float64", "float32"] = Field(
        default="float64", description="Element type for the timed model"
    )
    seed: int = Field(default=0, ge=0, description="Seed for weights and input tokens")

    @model_validator(mode="after")
    def _check_heads(self) -> Self:
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}"
            )
        return self

    def model_config_for(self, mechanism: Mechanism) -> ModelConfig:
        """Encoder config with these dimensions; identical except for the mechanism."""
        return ModelConfig(
            vocab_size=self.vocab_size,
            seq_len=self.seq_len,
            d_model=self.d_model,
            d_ff=self.d_ff,
            n_heads=self.n_heads,
            n_layers=self.n_layers,
            n_classes=self.n_classes,
            mechanism=mechanism,
            seed=self.seed,
        )


class GradCheckConfig(BaseModel):
    """Settings of the model-level finite-difference check."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    tolerance: float = Field(default=1e-4, ge=0.0, description="Pass iff max rel. error < this")
    step: float = Field(default=1e-5, ge=1e-7, le=1e-3, description="Central-difference step h")
    n_params: int = Field(default=200, ge=1, description="Sampled parameter components")
    batch_size: int = Field(default=4, ge=1, description="Random sequences in the loss")
    seed: int = Field(default=0, ge=0, description="Sampling seed")
