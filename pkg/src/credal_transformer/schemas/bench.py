"""FLOP counts, timing results and the benchmark comparison report."""

from __future__ import annotations

from enum import StrEnum

from pydantic import BaseModel, Field, computed_field

from credal_transformer.config.model import Mechanism


class Phase(StrEnum):
    """What a timed call does."""

    INFERENCE = "inference"
    TRAIN_STEP = "train_step"


class FlopModel(BaseModel):
    """Analytic FLOP breakdown of one multi-head attention block.

    Convention: every scalar add, mul, div, exp or log is 1 FLOP; an
    (m×k)·(k×n) matmul is 2mkn.
    """

    mechanism: Mechanism = Field(description="standard or credal")
    seq_len: int = Field(description="Sequence length L")
    d_k: int = Field(description="Query/key width per head")
    d_v: int = Field(description="Value width per head")
    n_heads: int = Field(description="Number of heads")
    d_model: int = Field(description="Model width the projections map from/to")
    projections: int = Field(description="Q, K, V and output projections")
    scores: int = Field(description="Q·Kᵀ for all heads")
    scaling: int = Field(description="Multiplication by 1/sqrt(d_k)")
    normalization: int = Field(description="Row normalization (exp, row sum, division)")
    evidence: int = Field(default=0, description="Concentration α = e + 1 (credal only)")
    vacuity: int = Field(default=0, description="U = L / α0 per row (credal only)")
    context: int = Field(description="Attention weights · V for all heads")

    @computed_field  # type: ignore[prop-decorator]
    @property
    def total(self) -> int:
        return (
            self.projections
            + self.scores
            + self.scaling
            + self.normalization
            + self.evidence
            + self.vacuity
            + self.context
        )

    @property
    def matmul_terms(self) -> dict[str, int]:
        """The components that are identical across mechanisms by construction."""
        return {"projections": self.projections, "scores": self.scores, "context": self.context}


class ModelFlops(BaseModel):
    """Analytic FLOP breakdown of one full encoder forward pass."""

    mechanism: Mechanism = Field(description="standard or credal")
    batch_size: int = Field(description="Sequences per forward pass")
    positional: int = Field(description="Adding positional encodings")
    attention: int = Field(description="All attention blocks")
    layer_norm: int = Field(description="All layer norms")
    feed_forward: int = Field(description="All feed-forward blocks incl. GELU and biases")
    residual: int = Field(description="Residual additions")
    pooling: int = Field(description="Mean over positions")
    head: int = Field(description="Classifier head")

    @computed_field  # type: ignore[prop-decorator]
    @property
    def total(self) -> int:
        return (
            self.positional
            + self.attention
            + self.layer_norm
            + self.feed_forward
            + self.residual
            + self.pooling
            + self.head
        )

    @property
    def gflops(self) -> float:
        return self.total / 1e9


class BenchResult(BaseModel):
    """Wall-clock statistics of one (mechanism, phase) pair."""

    mechanism: Mechanism = Field(description="standard or credal")
    phase: Phase = Field(description="inference or train_step")
    seq_len: int = Field(description="Sequence length L")
    d_model: int = Field(description="Model width")
    n_heads: int = Field(description="Attention heads")
    n_layers: int = Field(description="Encoder blocks")
    d_ff: int = Field(description="Feed-forward width")
    batch_size: int = Field(description="Sequences per timed call")
    dtype: str = Field(description="Element type")
    threads: int = Field(description="BLAS thread limit")
    reps: int = Field(ge=30, description="Timed repetitions")
    median_ms: float = Field(description="Median wall time")
    p5_ms: float = Field(description="5th percentile wall time")
    p95_ms: float = Field(description="95th percentile wall time")
    overhead_pct: float | None = Field(
        default=None, description="Median overhead vs the standard mechanism, in percent"
    )


class EnvironmentFingerprint(BaseModel):
    """Where the numbers were measured."""

    platform: str = Field(description="OS / architecture string")
    cpu: str = Field(description="CPU model name")
    python: str = Field(description="Python version and compiler")
    numpy: str = Field(description="numpy version")
    blas: list[str] = Field(default_factory=list, description="BLAS/OpenMP libraries in use")


class BenchCsvRow(BaseModel):
    """One row of the benchmark CSV: either a timing row or a FLOP row."""

    record: str = Field(description="timing or flops")
    mechanism: Mechanism = Field(description="standard or credal")
    phase: str = Field(description="inference, train_step, or forward for FLOP rows")
    seq_len: int = Field(description="Sequence length L")
    d_model: int = Field(description="Model width")
    n_heads: int = Field(description="Attention heads per layer")
    n_layers: int = Field(description="Encoder layers")
    batch_size: int = Field(description="Sequences per forward pass")
    reps: int | None = Field(default=None, description="Timed repetitions (timing rows)")
    median_ms: float | None = Field(default=None, description="Median wall time (timing rows)")
    p5_ms: float | None = Field(default=None, description="5th percentile (timing rows)")
    p95_ms: float | None = Field(default=None, description="95th percentile (timing rows)")
    overhead_pct: float | None = Field(
        default=None, description="Median overhead vs standard attention, percent"
    )
    gflops: float | None = Field(default=None, description="Whole-model GFLOPs (flops rows)")
    attention_flops: int | None = Field(
        default=None, description="Attention-block FLOPs (flops rows)"
    )
    gflop_diff_pct: float | None = Field(
        default=None, description="Credal vs standard FLOP difference, percent (flops rows)"
    )


class BenchReport(BaseModel):
    """Standard vs credal: FLOP parity and measured overheads."""

    timings: list[BenchResult] = Field(description="Both mechanisms × both phases")
    flops: list[ModelFlops] = Field(description="Whole-model counts per mechanism")
    attention_flops: list[FlopModel] = Field(description="Per-block counts per mechanism")
    inference_overhead_pct: float = Field(description="Credal vs standard, inference")
    train_step_overhead_pct: float = Field(description="Credal vs standard, train step")
    gflop_diff_pct: float = Field(description="Whole-model FLOP difference, percent")
    environment: EnvironmentFingerprint = Field(description="Measurement environment")

    def csv_rows(self) -> list[BenchCsvRow]:
        """Four timing rows followed by two FLOP rows."""
        rows = [
            BenchCsvRow(
                record="timing",
                mechanism=r.mechanism,
                phase=r.phase.value,
                seq_len=r.seq_len,
                d_model=r.d_model,
                n_heads=r.n_heads,
                n_layers=r.n_layers,
                batch_size=r.batch_size,
                reps=r.reps,
                median_ms=r.median_ms,
                p5_ms=r.p5_ms,
                p95_ms=r.p95_ms,
                overhead_pct=r.overhead_pct,
            )
            for r in self.timings
        ]
        first = self.timings[0]
        for model_flops, attn in zip(self.flops, self.attention_flops, strict=True):
            rows.append(
                BenchCsvRow(
                    record="flops",
                    mechanism=model_flops.mechanism,
                    phase="forward",
                    seq_len=first.seq_len,
                    d_model=first.d_model,
                    n_heads=first.n_heads,
                    n_layers=first.n_layers,
                    batch_size=model_flops.batch_size,
                    gflops=model_flops.gflops,
                    attention_flops=attn.total,
                    gflop_diff_pct=self.gflop_diff_pct,
                )
            )
        return rows
