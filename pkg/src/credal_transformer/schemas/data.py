"""Dataset record schemas."""

from __future__ import annotations

from enum import StrEnum
from typing import Self

from pydantic import BaseModel, ConfigDict, Field, model_validator


class SequenceKind(StrEnum):
    """Which generator produced a sequence."""

    ID = "ID"
    OOD = "OOD"
    NONSENSE = "Nonsense"


class LabeledSequence(BaseModel):
    """One token sequence; one JSONL line of a dataset dump."""

    model_config = ConfigDict(frozen=True)

    kind: SequenceKind = Field(description="ID, OOD or Nonsense")
    label: int | None = Field(default=None, description="Class index (ID only)")
    tokens: list[int] = Field(description="Token ids in [0, vocab)")

    @model_validator(mode="after")
    def _check_label(self) -> Self:
        if self.kind is SequenceKind.ID and self.label not in (0, 1):
            raise ValueError(f"ID sequences need label 0 or 1, got {self.label}")
        if self.kind is not SequenceKind.ID and self.label is not None:
            raise ValueError(f"{self.kind} sequences carry no label")
        return self
