"""Parameter checkpoints as `.npz` archives.

One array per parameter under its canonical name (see
`credal_transformer.model.encoder`), plus two metadata entries:

    __config__          ModelConfig as a JSON string
    __schema_version__  integer format version
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from credal_transformer.config.model import ModelConfig
from credal_transformer.core.tensor import Tensor
from credal_transformer.errors import ConfigError, InputError
from credal_transformer.model.encoder import ModelParams, check_params, parameter_shapes

logger = logging.getLogger(__name__)

CHECKPOINT_SCHEMA_VERSION = 1
CONFIG_KEY = "__config__"
VERSION_KEY = "__schema_version__"


def save_checkpoint(path: Path | str, params: ModelParams, config: ModelConfig) -> Path:
    """Write `params` and `config` to `path` (suffix `.npz` is enforced)."""
    check_params(params, config)
    target = Path(path).with_suffix(".npz")
    arrays = {name: t.values for name, t in params.items()}
    with target.open("wb") as f:
        np.savez(
            f,
            **arrays,
            **{
                CONFIG_KEY: np.array(config.model_dump_json()),
                VERSION_KEY: np.array(CHECKPOINT_SCHEMA_VERSION),
            },
        )
    logger.info("Saved checkpoint with %d parameters to %s", params.n_parameters, target)
    return target


def load_checkpoint(path: Path | str) -> tuple[ModelParams, ModelConfig]:
    """Read a checkpoint written by `save_checkpoint`.

    Raises:
        InputError: If the file is missing, not an archive, or of another schema version
        ConfigError: If the stored config is invalid or does not match the arrays
    """
    try:
        archive = np.load(Path(path), allow_pickle=False)
    except (OSError, ValueError) as e:
        raise InputError(f"cannot read checkpoint {path}: {e}") from e

    with archive:
        if VERSION_KEY not in archive.files or CONFIG_KEY not in archive.files:
            raise InputError(f"{path} is not a credal_transformer checkpoint")
        version = int(archive[VERSION_KEY])
        if version != CHECKPOINT_SCHEMA_VERSION:
            raise InputError(f"checkpoint schema version {version} is not supported")
        try:
            config = ModelConfig.model_validate(json.loads(str(archive[CONFIG_KEY])))
        except (ValidationError, json.JSONDecodeError) as e:
            raise ConfigError(f"checkpoint {path} holds an invalid config: {e}") from e

        tensors = {}
        for name in parameter_shapes(config):
            if name not in archive.files:
                raise ConfigError(f"checkpoint {path} lacks parameter {name}")
            tensors[name] = Tensor(archive[name], requires_grad=True)

    params = ModelParams(tensors)
    check_params(params, config)
    logger.info("Loaded checkpoint %s (%d parameters)", path, params.n_parameters)
    return params, config
