"""Subcommand implementations: run, bench, gradcheck, gen-data.

Each command takes a validated ExperimentConfig, writes only below
`config.out_dir` and returns a process exit code.
"""

from __future__ import annotations

from functools import partial
import logging
from typing import TYPE_CHECKING, TypeVar

import numpy as np
import pandas as pd
from threadpoolctl import threadpool_limits

from credal_transformer.bench.report import run_benchmark
from credal_transformer.config.model import Mechanism, ModelConfig
from credal_transformer.data.synth import generate_all, label_vector, token_matrix
from credal_transformer.errors import ContractError, CredalError, StageError
from credal_transformer.model.checkpoint import save_checkpoint
from credal_transformer.schemas.data import SequenceKind
from credal_transformer.schemas.reports import AbstentionSummary
from credal_transformer.training.abstain import (
    abstention_curve,
    abstention_rate,
    midpoint_threshold,
    sweep_thresholds,
)
from credal_transformer.training.evaluate import evaluate_uncertainty
from credal_transformer.training.gradcheck import gradient_check_model
from credal_transformer.training.train import predict, train
from credal_transformer.utils.io import (
    append_jsonl,
    ensure_dir,
    records_frame,
    write_csv,
    write_json,
    write_jsonl,
)

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence
    from pathlib import Path

    from credal_transformer.config.base import ExperimentConfig
    from credal_transformer.model.encoder import ModelParams
    from credal_transformer.schemas.data import LabeledSequence
    from credal_transformer.schemas.reports import UncertaintyReport

logger = logging.getLogger(__name__)

T = TypeVar("T")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ACCEPTANCE_FAILED = 3


def _stage(name: str, fn: Callable[[], T]) -> T:
    """Run one pipeline stage, tagging any failure with the stage name."""
    logger.info("Stage: %s", name)
    try:
        return fn()
    except StageError:
        raise
    except (CredalError, OSError, ValueError) as e:
        raise StageError(name, e) from e


def _write_config(config: ExperimentConfig, out_dir: Path) -> None:
    (out_dir / "config.json").write_text(config.to_json() + "\n", encoding="utf-8")


def _write_abstention(
    params: ModelParams,
    config: ExperimentConfig,
    eval_sets: dict[SequenceKind, list[LabeledSequence]],
    report: UncertaintyReport,
    out_dir: Path,
) -> float:
    """Abstention curve per kind plus the rates at the chosen τ. Returns τ."""
    threshold = (
        midpoint_threshold(report) if config.abstain_threshold is None else config.abstain_threshold
    )
    thresholds = sweep_thresholds()
    frames, summaries = [], []
    for kind, sequences in eval_sets.items():
        logits, uncertainty = predict(params, config.model, token_matrix(sequences))
        if uncertainty is None:
            raise ContractError("uncertainty requires credal mode")
        correct = (
            np.argmax(logits, axis=-1) == label_vector(sequences)
            if kind is SequenceKind.ID
            else None
        )
        curve = records_frame(abstention_curve(uncertainty, correct, thresholds))
        frames.append(curve.assign(kind=kind.value))
        summaries.append(
            AbstentionSummary(
                threshold=threshold,
                kind=kind,
                abstention_rate=abstention_rate(uncertainty, threshold),
            )
        )
        logger.info(
            "Abstention at τ=%.4f on %s: %.1f%%",
            threshold,
            kind,
            100 * summaries[-1].abstention_rate,
        )
    curve_frame = pd.concat(frames, ignore_index=True)
    columns = ["kind", *[c for c in curve_frame.columns if c != "kind"]]
    write_csv(out_dir / "abstention_curve.csv", curve_frame[columns])
    write_csv(out_dir / "abstention_summary.csv", summaries)
    return threshold


def cmd_run_experiment(config: ExperimentConfig) -> int:
    """Generate data, train on ID, evaluate uncertainty per kind, write artifacts.

    Artifacts under `config.out_dir`: config.json, checkpoint.npz,
    train_log.jsonl, uncertainty_report.csv/.json, abstention_curve.csv,
    abstention_summary.csv.

    Returns:
        0 if mean U orders ID < OOD < Nonsense with 20% gaps, else 3

    Raises:
        StageError: If any stage fails (message carries the stage name)
    """
    if config.model.mechanism is not Mechanism.CREDAL:
        raise StageError("evaluate", ContractError("uncertainty requires credal mode"))

    out_dir = _stage("setup", lambda: ensure_dir(config.out_dir))
    _stage("setup", lambda: _write_config(config, out_dir))

    with threadpool_limits(limits=1):
        data = _stage("data", lambda: generate_all(config.data))

        log_path = out_dir / "train_log.jsonl"
        log_path.write_text("", encoding="utf-8")
        result = _stage(
            "train",
            lambda: train(
                config.model,
                config.train,
                data.train_id,
                on_epoch=lambda record: append_jsonl(log_path, record),
            ),
        )
        checkpoint = out_dir / "checkpoint.npz"
        _stage("train", lambda: save_checkpoint(checkpoint, result.params, config.model))

        report = _stage(
            "evaluate",
            lambda: evaluate_uncertainty(result.params, config.model, data.eval_sets, config.seed),
        )

        def write_reports() -> float:
            write_csv(out_dir / "uncertainty_report.csv", report.rows)
            write_json(out_dir / "uncertainty_report.json", report)
            return _write_abstention(result.params, config, data.eval_sets, report, out_dir)

        _stage("write", write_reports)

    holds = report.ordering_holds()
    logger.info(
        "Mean U: ID %.4f, OOD %.4f, Nonsense %.4f; ID accuracy %.3f; ordering %s",
        report.mean_u(SequenceKind.ID),
        report.mean_u(SequenceKind.OOD),
        report.mean_u(SequenceKind.NONSENSE),
        report.id_accuracy,
        "holds" if holds else "FAILS",
    )
    return EXIT_OK if holds else EXIT_ACCEPTANCE_FAILED


def cmd_bench(config: ExperimentConfig) -> int:
    """Time both mechanisms in both phases; write bench_results.csv and bench_summary.json."""
    out_dir = _stage("setup", lambda: ensure_dir(config.out_dir))
    report = _stage("bench", lambda: run_benchmark(config.bench))

    def write() -> None:
        write_csv(out_dir / "bench_results.csv", report.csv_rows())
        write_json(out_dir / "bench_summary.json", report)

    _stage("write", write)
    return EXIT_OK


def cmd_gradcheck(
    config: ExperimentConfig, mechanisms: Sequence[Mechanism] | None = None
) -> int:
    """Finite-difference check of the small model for each mechanism.

    Returns:
        0 if every checked mechanism passes the tolerance, else 3
    """
    out_dir = _stage("setup", lambda: ensure_dir(config.out_dir))
    settings = config.gradcheck
    passed = True
    for mechanism in mechanisms or (Mechanism.CREDAL, Mechanism.STANDARD):
        check = partial(
            gradient_check_model,
            ModelConfig.for_gradcheck(mechanism, seed=config.model.seed),
            tolerance=settings.tolerance,
            step=settings.step,
            n_params=settings.n_params,
            batch_size=settings.batch_size,
            seed=settings.seed,
        )
        report = _stage("gradcheck", check)
        _stage("write", partial(write_json, out_dir / f"gradcheck_{mechanism}.json", report))
        if report.passed:
            continue
        passed = False
        for offender in report.worst:
            logger.error(
                "  %s%s: analytic %.6e, numeric %.6e, relative error %.3e",
                offender.name,
                offender.index,
                offender.analytic,
                offender.numeric,
                offender.relative_error,
            )
    return EXIT_OK if passed else EXIT_ACCEPTANCE_FAILED


def cmd_gen_data(config: ExperimentConfig) -> int:
    """Dump the ID train/eval, OOD and Nonsense sets as JSONL under out_dir/data."""
    out_dir = _stage("setup", lambda: ensure_dir(config.out_dir / "data"))
    data = _stage("data", lambda: generate_all(config.data))
    for stem, sequences in data.named().items():
        path = out_dir / f"{stem}.jsonl"
        count = _stage("write", partial(write_jsonl, path, sequences))
        logger.info("Wrote %d sequences to %s", count, path)
    return EXIT_OK
