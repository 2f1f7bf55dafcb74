"""Wall-clock timing of encoder inference and training steps."""

from __future__ import annotations

import logging
import time
from typing import TYPE_CHECKING

import numpy as np
from threadpoolctl import threadpool_limits

from credal_transformer.config.model import BenchConfig, Mechanism, TrainConfig
from credal_transformer.core.tensor import backward, no_grad
from credal_transformer.errors import ConfigError, TimerResolutionError
from credal_transformer.model.encoder import forward_batch, init_params
from credal_transformer.schemas.bench import BenchResult, Phase
from credal_transformer.training.optim import AdamState, adam_step, cross_entropy_loss
from credal_transformer.utils.seeding import rng_for

if TYPE_CHECKING:
    from collections.abc import Callable

logger = logging.getLogger(__name__)

MIN_REPS = 30
MIN_WARMUP = 5
MIN_MEDIAN_MS = 0.1


def percentile_summary(samples_ms: np.ndarray) -> tuple[float, float, float]:
    """(median, p5, p95) of the samples."""
    p5, median, p95 = np.percentile(samples_ms, [5.0, 50.0, 95.0])
    return float(median), float(p5), float(p95)


def _workload(config: BenchConfig, mechanism: Mechanism, phase: Phase) -> Callable[[], None]:
    model_config = config.model_config_for(mechanism)
    params = init_params(model_config, dtype=config.dtype)
    rng = rng_for(config.seed, "bench", "inputs")
    tokens = rng.integers(0, config.vocab_size, (config.batch_size, config.seq_len))
    labels = rng.integers(0, config.n_classes, config.batch_size)

    if phase is Phase.INFERENCE:

        def run() -> None:
            with no_grad():
                forward_batch(params, model_config, tokens)

        return run

    train_config = TrainConfig()
    state = AdamState.zeros_like(params)

    def step() -> None:
        params.zero_grad()
        output = forward_batch(params, model_config, tokens)
        loss = cross_entropy_loss(output.logits, labels)
        backward(loss)
        adam_step(params, params.grads(), state, 1, train_config)

    return step


def time_mechanism(
    config: BenchConfig,
    mechanism: Mechanism,
    phase: Phase,
    reps: int | None = None,
) -> BenchResult:
    """Median/p5/p95 wall time of a full forward (or forward+backward+Adam step).

    Weights and input tokens depend only on `config.seed`, so both mechanisms
    see identical bits. Each train step starts from the same parameters.

    Args:
        config: Benchmark dimensions and methodology
        mechanism: standard or credal
        phase: inference or train_step
        reps: Timed repetitions (default config.reps)

    Raises:
        ConfigError: If reps < 30 or warmup < 5
        TimerResolutionError: If the median is below 0.1 ms
    """
    reps = config.reps if reps is None else reps
    if reps < MIN_REPS:
        raise ConfigError(f"reps={reps} is below the minimum of {MIN_REPS}")
    if config.warmup < MIN_WARMUP:
        raise ConfigError(f"warmup={config.warmup} is below the minimum of {MIN_WARMUP}")

    run = _workload(config, mechanism, phase)
    samples = np.empty(reps, dtype=np.float64)
    with threadpool_limits(limits=config.threads):
        for _ in range(config.warmup):
            run()
        for i in range(reps):
            start = time.perf_counter_ns()
            run()
            samples[i] = (time.perf_counter_ns() - start) / 1e6

    median, p5, p95 = percentile_summary(samples)
    if median < MIN_MEDIAN_MS:
        raise TimerResolutionError(
            f"median {median:.4f} ms is below {MIN_MEDIAN_MS} ms; increase seq_len, "
            "d_model or batch_size"
        )
    logger.info(
        "%s %s: median %.3f ms (p5 %.3f, p95 %.3f) over %d reps",
        mechanism,
        phase,
        median,
        p5,
        p95,
        reps,
    )
    return BenchResult(
        mechanism=mechanism,
        phase=phase,
        seq_len=config.seq_len,
        d_model=config.d_model,
        n_heads=config.n_heads,
        n_layers=config.n_layers,
        d_ff=config.d_ff,
        batch_size=config.batch_size,
        dtype=config.dtype,
        threads=config.threads,
        reps=reps,
        median_ms=median,
        p5_ms=p5,
        p95_ms=p95,
    )
