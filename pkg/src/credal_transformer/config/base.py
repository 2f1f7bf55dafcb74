"""Experiment configuration, loaded from defaults, environment, a JSON file and CLI flags."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Self

from pydantic import Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from credal_transformer.config.model import (
    BenchConfig,
    DatasetSpec,
    GradCheckConfig,
    ModelConfig,
    TrainConfig,
)
from credal_transformer.errors import ConfigError
from credal_transformer.utils.seeding import derive_seed

logger = logging.getLogger(__name__)

# This module is in src/credal_transformer/config/base.py
# Project root is 3 levels up
PROJECT_ROOT = Path(__file__).parent.parent.parent.parent

SCHEMA_VERSION = 1
SEEDED_COMPONENTS = ("model", "train", "data", "bench", "gradcheck")


class ExperimentConfig(BaseSettings):
    """Everything one CLI invocation needs.

    Precedence (highest first): CLI flags, config file, `CREDAL_*` environment
    variables (nested with `__`, e.g. `CREDAL_TRAIN__EPOCHS=5`), defaults.

    The component seeds are not independent settings: each one is derived
    from the root `seed` as `derive_seed(seed, "<component>")`, so a single
    integer reproduces a whole run.
    """

    model_config = SettingsConfigDict(
        env_file=str(PROJECT_ROOT / ".env"),
        env_prefix="CREDAL_",
        env_nested_delimiter="__",
        case_sensitive=False,
        extra="forbid",
    )

    schema_version: int = Field(default=SCHEMA_VERSION, description="Config file schema version")
    seed: int = Field(default=0, ge=0, description="Root seed; all randomness derives from it")
    out_dir: Path = Field(default=Path("runs"), description="Directory for every output file")
    model: ModelConfig = Field(default_factory=ModelConfig, description="Encoder architecture")
    train: TrainConfig = Field(default_factory=TrainConfig, description="Optimizer settings")
    data: DatasetSpec = Field(default_factory=DatasetSpec, description="Synthetic datasets")
    bench: BenchConfig = Field(default_factory=BenchConfig, description="Benchmark settings")
    gradcheck: GradCheckConfig = Field(
        default_factory=GradCheckConfig, description="Gradient check settings"
    )
    abstain_threshold: float | None = Field(
        default=None,
        gt=0.0,
        lt=1.0,
        description="Abstention threshold τ; None = midpoint of mean U on ID and Nonsense",
    )

    @model_validator(mode="after")
    def _check_and_seed(self) -> Self:
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(
                f"unsupported schema_version {self.schema_version} (expected {SCHEMA_VERSION})"
            )
        if self.model.seq_len != self.data.seq_len:
            raise ValueError(
                f"model.seq_len={self.model.seq_len} differs from data.seq_len={self.data.seq_len}"
            )
        if self.model.vocab_size < self.data.vocab:
            raise ValueError(
                f"model.vocab_size={self.model.vocab_size} < data.vocab={self.data.vocab}"
            )
        for name in SEEDED_COMPONENTS:
            component = getattr(self, name)
            derived = derive_seed(self.seed, name)
            if component.seed != derived:
                setattr(self, name, component.model_copy(update={"seed": derived}))
        return self

    def to_json(self) -> str:
        """Serialized form, reloadable with `load_config`."""
        return self.model_dump_json(indent=2)


def deep_merge(base: dict[str, Any], overrides: dict[str, Any]) -> dict[str, Any]:
    """Recursively merge `overrides` into a copy of `base`.

    None values mean "not given" and are skipped, as are nested override
    dicts that end up empty.
    """
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict):
            current = merged.get(key)
            nested = deep_merge(current if isinstance(current, dict) else {}, value)
            if nested:
                merged[key] = nested
        else:
            merged[key] = value
    return merged


def load_config(
    path: Path | str | None = None, overrides: dict[str, Any] | None = None
) -> ExperimentConfig:
    """Build an ExperimentConfig from an optional JSON file plus CLI overrides.

    Args:
        path: JSON config file (same layout as `ExperimentConfig.to_json()`)
        overrides: Nested dict of CLI values; None entries mean "not given"

    Returns:
        Validated configuration

    Raises:
        ConfigError: If the file is unreadable, not JSON, or fails validation
    """
    values: dict[str, Any] = {}
    if path is not None:
        try:
            values = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
        if not isinstance(values, dict):
            raise ConfigError(f"config file {path} must contain a JSON object")
        logger.info("Loaded config file %s", path)
    if overrides:
        values = deep_merge(values, overrides)
    try:
        return ExperimentConfig(**values)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}") from e
