"""Spill files per replication unit and the merged experiment outputs."""

import csv
import io
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Type

from pydantic import BaseModel

from app.models import ExperimentSummary
from app.utils.errors import ResultsIOError

logger = logging.getLogger(__name__)

UnitKey = Tuple


def format_value(value) -> str:
    """CSV text of one scalar; floats keep 17 significant digits"""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def row_cells(row: BaseModel) -> Tuple[List[str], List[str]]:
    """Header and cells of a record, expanding list fields to name_1 .. name_p"""
    header, cells = [], []
    for name, value in row.model_dump().items():
        if isinstance(value, list):
            for k, item in enumerate(value, start=1):
                header.append(f"{name}_{k}")
                cells.append(format_value(float(item)))
        else:
            header.append(name)
            cells.append(format_value(value))
    return header, cells


def unit_name(key: UnitKey) -> str:
    parts = []
    for item in key:
        if isinstance(item, float):
            parts.append(format(item, ".6g").replace(".", "p"))
        else:
            parts.append(str(item))
    return "unit_" + "_".join(parts) + ".csv"


class ResultsStore:
    """Output directory of one experiment.

    Units are written atomically to ``<out>/units/<experiment>/`` so an
    interrupted run can resume by skipping the units already on disk.
    """

    def __init__(self, directory: str, experiment: str):
        self.root = Path(directory)
        self.experiment = experiment
        self.unit_dir = self.root / "units" / experiment
        try:
            self.unit_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ResultsIOError(f"cannot create output directory {self.unit_dir}: {e}") from e

    def unit_path(self, key: UnitKey) -> Path:
        return self.unit_dir / unit_name(key)

    def has_unit(self, key: UnitKey) -> bool:
        return self.unit_path(key).exists()

    def _atomic_write(self, path: Path, text: str):
        try:
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp_", suffix=path.suffix)
            with os.fdopen(fd, "w", newline="") as f:
                f.write(text)
            os.replace(tmp, path)
        except OSError as e:
            raise ResultsIOError(f"error writing {path}: {e}") from e

    def write_unit(self, key: UnitKey, rows: Sequence[BaseModel]):
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        for k, row in enumerate(rows):
            header, cells = row_cells(row)
            if k == 0:
                writer.writerow(header)
            writer.writerow(cells)
        self._atomic_write(self.unit_path(key), buffer.getvalue())

    def read_unit(self, key: UnitKey) -> List[Dict[str, str]]:
        try:
            with open(self.unit_path(key), newline="") as f:
                return list(csv.DictReader(f))
        except OSError as e:
            raise ResultsIOError(f"error reading unit {self.unit_path(key)}: {e}") from e

    def merge(self, keys: Iterable[UnitKey], filename: str, header: Optional[List[str]] = None) -> Path:
        """Concatenate unit files in sorted key order into one CSV"""
        lines: List[str] = []
        for key in sorted(keys):
            try:
                text = self.unit_path(key).read_text()
            except OSError as e:
                raise ResultsIOError(f"missing unit {self.unit_path(key)}: {e}") from e
            unit_lines = text.splitlines()
            if not unit_lines:
                continue
            if not lines:
                lines.append(unit_lines[0])
            lines.extend(unit_lines[1:])
        if not lines and header:
            lines.append(",".join(header))
        target = self.root / filename
        self._atomic_write(target, "\n".join(lines) + "\n" if lines else "")
        logger.info("wrote %s (%d rows)", target, max(len(lines) - 1, 0))
        return target

    def write_summary(self, summary: ExperimentSummary) -> Path:
        target = self.root / "summary.json"
        self._atomic_write(target, json.dumps(summary.model_dump(), indent=2, default=str, allow_nan=True))
        return target

    def clear_units(self):
        for path in self.unit_dir.glob("unit_*.csv"):
            try:
                path.unlink()
            except OSError as e:
                raise ResultsIOError(f"error clearing {path}: {e}") from e
