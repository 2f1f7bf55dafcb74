"""Writers for the run artifacts: JSON, JSONL and CSV."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import TYPE_CHECKING

import pandas as pd

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

    from pydantic import BaseModel

logger = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = "%.10g"


def ensure_dir(path: Path | str) -> Path:
    """Create `path` (and parents) if missing."""
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def write_json(path: Path, record: BaseModel) -> Path:
    """Write one pydantic record as indented JSON."""
    path.write_text(record.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.debug("Wrote %s", path)
    return path


def write_jsonl(path: Path, records: Iterable[BaseModel]) -> int:
    """Write records one per line (truncating `path`). Returns the line count."""
    count = 0
    with path.open("w", encoding="utf-8") as f:
        for record in records:
            f.write(record.model_dump_json() + "\n")
            count += 1
    logger.debug("Wrote %d records to %s", count, path)
    return count


def append_jsonl(path: Path, record: BaseModel) -> None:
    """Append one record as a JSON line."""
    with path.open("a", encoding="utf-8") as f:
        f.write(record.model_dump_json() + "\n")


def read_jsonl(path: Path) -> list[dict]:
    """Parse a JSONL file into a list of dicts (blank lines skipped)."""
    with path.open(encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def records_frame(records: Sequence[BaseModel]) -> pd.DataFrame:
    """DataFrame with one row per record, columns in field order."""
    return pd.DataFrame([record.model_dump(mode="json") for record in records])


def write_csv(path: Path, records: Sequence[BaseModel] | pd.DataFrame) -> Path:
    """Write records as CSV with a fixed float format (byte-stable across runs)."""
    frame = records if isinstance(records, pd.DataFrame) else records_frame(records)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    logger.debug("Wrote %d rows to %s", len(frame), path)
    return path
