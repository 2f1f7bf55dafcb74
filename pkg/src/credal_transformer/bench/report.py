"""Pairing timings into the standard-vs-credal comparison report."""

from __future__ import annotations

import logging
from pathlib import Path
import platform
from typing import TYPE_CHECKING

import numpy as np
from threadpoolctl import threadpool_info

from credal_transformer.bench.flops import count_attention_flops, count_model_flops
from credal_transformer.bench.timing import time_mechanism
from credal_transformer.config.model import Mechanism
from credal_transformer.errors import ReportError
from credal_transformer.schemas.bench import BenchReport, BenchResult, EnvironmentFingerprint, Phase

if TYPE_CHECKING:
    from collections.abc import Sequence

    from credal_transformer.config.model import BenchConfig

logger = logging.getLogger(__name__)

CPUINFO = Path("/proc/cpuinfo")


def relative_overhead(baseline_ms: float, candidate_ms: float) -> float:
    """Percent by which `candidate_ms` exceeds `baseline_ms`.

    Example:
        >>> relative_overhead(100.0, 104.4)
        4.4  # up to float rounding
    """
    return (candidate_ms / baseline_ms - 1.0) * 100.0


def cpu_model() -> str:
    """CPU model name from /proc/cpuinfo, falling back to `platform.processor()`."""
    try:
        for line in CPUINFO.read_text(encoding="utf-8").splitlines():
            if line.lower().startswith("model name"):
                return line.split(":", 1)[1].strip()
    except OSError:
        logger.debug("No %s, using platform.processor()", CPUINFO)
    return platform.processor() or "unknown"


def environment_fingerprint() -> EnvironmentFingerprint:
    return EnvironmentFingerprint(
        platform=platform.platform(),
        cpu=cpu_model(),
        python=f"{platform.python_version()} ({platform.python_compiler()})",
        numpy=np.__version__,
        blas=sorted(
            f"{info.get('internal_api', '?')} {info.get('version') or ''}".strip()
            for info in threadpool_info()
        ),
    )


def _pair(results: Sequence[BenchResult], phase: Phase) -> tuple[BenchResult, BenchResult]:
    found = {r.mechanism: r for r in results if r.phase is phase}
    missing = [m.value for m in Mechanism if m not in found]
    if missing:
        raise ReportError(f"no {phase} result for: {', '.join(missing)}")
    return found[Mechanism.STANDARD], found[Mechanism.CREDAL]


def compare_report(results: Sequence[BenchResult], config: BenchConfig) -> BenchReport:
    """Overheads per phase plus analytic FLOP parity for the benchmarked config.

    Raises:
        ReportError: If either mechanism lacks a result for either phase
    """
    timings: list[BenchResult] = []
    overheads: dict[Phase, float] = {}
    for phase in Phase:
        standard, credal = _pair(results, phase)
        overheads[phase] = relative_overhead(standard.median_ms, credal.median_ms)
        timings.append(standard.model_copy(update={"overhead_pct": 0.0}))
        timings.append(credal.model_copy(update={"overhead_pct": overheads[phase]}))

    model_config = config.model_config_for(Mechanism.STANDARD)
    flops = [
        count_model_flops(model_config, mechanism, batch_size=config.batch_size)
        for mechanism in (Mechanism.STANDARD, Mechanism.CREDAL)
    ]
    attention = [
        count_attention_flops(
            config.seq_len,
            model_config.d_head,
            model_config.d_head,
            config.n_heads,
            mechanism,
            config.d_model,
        )
        for mechanism in (Mechanism.STANDARD, Mechanism.CREDAL)
    ]
    gflop_diff = (flops[1].total / flops[0].total - 1.0) * 100.0

    report = BenchReport(
        timings=timings,
        flops=flops,
        attention_flops=attention,
        inference_overhead_pct=overheads[Phase.INFERENCE],
        train_step_overhead_pct=overheads[Phase.TRAIN_STEP],
        gflop_diff_pct=gflop_diff,
        environment=environment_fingerprint(),
    )
    logger.info(
        "Overhead: inference %+.1f%%, train step %+.1f%%; GFLOPs %.4f vs %.4f (%+.3f%%)",
        report.inference_overhead_pct,
        report.train_step_overhead_pct,
        flops[0].gflops,
        flops[1].gflops,
        gflop_diff,
    )
    return report


def run_benchmark(config: BenchConfig, reps: int | None = None) -> BenchReport:
    """Time both mechanisms in both phases and build the report."""
    logger.info(
        "Benchmark: L=%d, d_model=%d, %d heads, %d layers, batch %d, %s, %d thread(s)",
        config.seq_len,
        config.d_model,
        config.n_heads,
        config.n_layers,
        config.batch_size,
        config.dtype,
        config.threads,
    )
    results = [
        time_mechanism(config, mechanism, phase, reps)
        for phase in Phase
        for mechanism in (Mechanism.STANDARD, Mechanism.CREDAL)
    ]
    return compare_report(results, config)
