"""Entry point for credal-transformer.

Subcommands:
    run        train a credal encoder on ID data and report uncertainty per data kind
    bench      FLOP parity and wall-clock overhead, standard vs credal attention
    gradcheck  finite-difference check of the full model's gradients
    gen-data   dump the synthetic datasets as JSONL

Exit codes: 0 success, 1 error, 2 usage error, 3 acceptance check failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import TYPE_CHECKING, Any

from credal_transformer.cli.commands import (
    EXIT_ERROR,
    cmd_bench,
    cmd_gen_data,
    cmd_gradcheck,
    cmd_run_experiment,
)
from credal_transformer.config.base import load_config
from credal_transformer.config.model import Mechanism
from credal_transformer.errors import CredalError

if TYPE_CHECKING:
    from collections.abc import Sequence

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subparser per command; common flags on each."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config file")
    common.add_argument("--seed", type=int, help="Root seed (overrides the file)")
    common.add_argument("--out", metavar="DIR", help="Output directory")
    common.add_argument(
        "--mechanism",
        choices=[m.value for m in Mechanism],
        help="Attention mechanism (gradcheck: restrict to this one)",
    )
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")

    parser = argparse.ArgumentParser(
        prog="credal-transformer",
        description="Credal attention: Dirichlet-evidence attention with per-query vacuity.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("run", parents=[common], help="Uncertainty ordering experiment")

    bench = commands.add_parser("bench", parents=[common], help="Standard vs credal benchmark")
    bench.add_argument("--reps", type=int, help="Timed repetitions (minimum 30)")
    bench.add_argument("--threads", type=int, help="BLAS threads")

    gradcheck = commands.add_parser("gradcheck", parents=[common], help="Gradient check")
    gradcheck.add_argument("--tolerance", type=float, help="Max relative error to pass")

    commands.add_parser("gen-data", parents=[common], help="Dump datasets as JSONL")
    return parser


def overrides_from_args(args: argparse.Namespace) -> dict[str, Any]:
    """Nested config overrides for the flags that were given."""
    model = {"mechanism": args.mechanism} if args.command != "gradcheck" else {}
    return {
        "seed": args.seed,
        "out_dir": args.out,
        "model": model,
        "bench": {
            "reps": getattr(args, "reps", None),
            "threads": getattr(args, "threads", None),
        },
        "gradcheck": {"tolerance": getattr(args, "tolerance", None)},
    }


def main(argv: Sequence[str] | None = None) -> int:
    """Parse arguments, load the config and dispatch to a command."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format=LOG_FORMAT,
        force=True,
    )

    try:
        config = load_config(args.config, overrides_from_args(args))
        logger.info("Running %s (seed %d, output in %s)", args.command, config.seed, config.out_dir)
        if args.command == "run":
            return cmd_run_experiment(config)
        if args.command == "bench":
            return cmd_bench(config)
        if args.command == "gradcheck":
            mechanisms = None if args.mechanism is None else [Mechanism(args.mechanism)]
            return cmd_gradcheck(config, mechanisms)
        return cmd_gen_data(config)
    except CredalError as e:
        logger.error("%s", e)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
