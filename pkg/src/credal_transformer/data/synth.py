"""Seeded generators for the In-Distribution, Out-of-Distribution and Nonsense sets.

- ID: two fixed affine templates over tokens 0..31 with per-token noise
  (class 0: (3i + 5) mod 32, class 1: (5i + 2) mod 32)
- OOD: i.i.d. uniform tokens from the same range 0..31, no structure
- Nonsense: i.i.d. uniform tokens from the unseen range 32..63

Every sequence draws from its own generator, `rng_for(seed, kind, split, index)`,
so any subset can be regenerated independently and in any order.
"""

from __future__ import annotations

from dataclasses import dataclass
import logging
from typing import TYPE_CHECKING

import numpy as np

from credal_transformer.errors import ConfigError, InputError
from credal_transformer.schemas.data import LabeledSequence, SequenceKind
from credal_transformer.utils.seeding import rng_for

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import NDArray

    from credal_transformer.config.model import DatasetSpec

logger = logging.getLogger(__name__)

SEEN_TOKENS = 32
NONSENSE_LOW = 32
NONSENSE_HIGH = 64
N_CLASSES = 2


def class_template(label: int, length: int) -> NDArray[np.int64]:
    """Noise-free token pattern of an ID class."""
    i = np.arange(length, dtype=np.int64)
    if label == 0:
        return (3 * i + 5) % SEEN_TOKENS
    if label == 1:
        return (5 * i + 2) % SEEN_TOKENS
    raise InputError(f"ID classes are 0 and 1, got {label}")


def _check_vocab(spec: DatasetSpec, needed: int, kind: SequenceKind) -> None:
    if spec.vocab < needed:
        raise ConfigError(f"{kind} sequences need vocab >= {needed}, got {spec.vocab}")


def gen_id(
    spec: DatasetSpec, n: int | None = None, split: str = "train"
) -> list[LabeledSequence]:
    """Noisy template sequences; labels alternate 0, 1, 0, ... (balanced).

    Args:
        spec: Dataset settings
        n: Number of sequences (default: n_train_id for "train", n_eval otherwise)
        split: Stream name; different splits never share sequences
    """
    _check_vocab(spec, SEEN_TOKENS, SequenceKind.ID)
    count = (spec.n_train_id if split == "train" else spec.n_eval) if n is None else n
    templates = [class_template(label, spec.seq_len) for label in range(N_CLASSES)]
    sequences = []
    for idx in range(count):
        label = idx % N_CLASSES
        rng = rng_for(spec.seed, SequenceKind.ID.value, split, idx)
        noisy = rng.random(spec.seq_len) < spec.noise_prob
        replacement = rng.integers(0, SEEN_TOKENS, spec.seq_len)
        tokens = np.where(noisy, replacement, templates[label])
        sequences.append(
            LabeledSequence(kind=SequenceKind.ID, label=label, tokens=tokens.tolist())
        )
    logger.debug("Generated %d ID sequences (%s)", count, split)
    return sequences


def _gen_uniform(
    spec: DatasetSpec, kind: SequenceKind, low: int, high: int, n: int | None, split: str
) -> list[LabeledSequence]:
    count = spec.n_eval if n is None else n
    sequences = []
    for idx in range(count):
        rng = rng_for(spec.seed, kind.value, split, idx)
        tokens = rng.integers(low, high, spec.seq_len)
        sequences.append(LabeledSequence(kind=kind, tokens=tokens.tolist()))
    logger.debug("Generated %d %s sequences (%s)", count, kind, split)
    return sequences


def gen_ood(spec: DatasetSpec, n: int | None = None, split: str = "eval") -> list[LabeledSequence]:
    """Uniform tokens over the seen range 0..31."""
    _check_vocab(spec, SEEN_TOKENS, SequenceKind.OOD)
    return _gen_uniform(spec, SequenceKind.OOD, 0, SEEN_TOKENS, n, split)


def gen_nonsense(
    spec: DatasetSpec, n: int | None = None, split: str = "eval"
) -> list[LabeledSequence]:
    """Uniform tokens over the unseen range 32..63.

    Raises:
        ConfigError: If spec.vocab < 64
    """
    _check_vocab(spec, NONSENSE_HIGH, SequenceKind.NONSENSE)
    return _gen_uniform(spec, SequenceKind.NONSENSE, NONSENSE_LOW, NONSENSE_HIGH, n, split)


@dataclass(frozen=True)
class ExperimentData:
    """Training set plus one evaluation set per kind."""

    train_id: list[LabeledSequence]
    eval_id: list[LabeledSequence]
    ood: list[LabeledSequence]
    nonsense: list[LabeledSequence]

    @property
    def eval_sets(self) -> dict[SequenceKind, list[LabeledSequence]]:
        return {
            SequenceKind.ID: self.eval_id,
            SequenceKind.OOD: self.ood,
            SequenceKind.NONSENSE: self.nonsense,
        }

    def named(self) -> dict[str, list[LabeledSequence]]:
        """Datasets keyed by dump file stem."""
        return {
            "id_train": self.train_id,
            "id_eval": self.eval_id,
            "ood_eval": self.ood,
            "nonsense_eval": self.nonsense,
        }


def generate_all(spec: DatasetSpec) -> ExperimentData:
    """All four datasets of the uncertainty experiment."""
    data = ExperimentData(
        train_id=gen_id(spec, split="train"),
        eval_id=gen_id(spec, split="eval"),
        ood=gen_ood(spec),
        nonsense=gen_nonsense(spec),
    )
    logger.info(
        "Generated datasets: %d ID train, %d per kind for evaluation",
        len(data.train_id),
        spec.n_eval,
    )
    return data


def token_matrix(sequences: Sequence[LabeledSequence]) -> NDArray[np.int64]:
    """Stack token lists into a (N, L) array.

    Raises:
        InputError: If the sequences have different lengths
    """
    if not sequences:
        return np.zeros((0, 0), dtype=np.int64)
    lengths = {len(s.tokens) for s in sequences}
    if len(lengths) != 1:
        raise InputError(f"sequences have mixed lengths {sorted(lengths)}")
    return np.asarray([s.tokens for s in sequences], dtype=np.int64)


def label_vector(sequences: Sequence[LabeledSequence]) -> NDArray[np.int64]:
    """Labels of ID sequences as an int array.

    Raises:
        InputError: If any sequence is not ID
    """
    if any(s.kind is not SequenceKind.ID for s in sequences):
        raise InputError("labels exist only for ID sequences")
    return np.asarray([s.label for s in sequences], dtype=np.int64)
