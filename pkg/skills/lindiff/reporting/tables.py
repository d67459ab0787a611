"""Long-format CSV tables with a versioned header line."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

import numpy as np

from skills.lindiff.meta import CSV_SCHEMA
from skills.lindiff.types import ExperimentRecord


def _cell(value: Any) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        return format(v, ".17g")
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _sort_number(value: float) -> float:
    return -math.inf if math.isnan(value) else value


def record_sort_key(record: ExperimentRecord) -> tuple:
    """Rows sort by (N, draw, tau), then by the remaining identifying columns."""
    return (
        record.n,
        record.draw,
        _sort_number(record.tau),
        record.t,
        record.kind,
        _sort_number(record.k),
        _sort_number(record.c),
    )


def write_rows_csv(path: str | Path, columns: list[str], rows: Iterable[dict[str, Any]]) -> str:
    out = Path(path).expanduser().resolve()
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8", newline="") as f:
        f.write(CSV_SCHEMA + "\n")
        writer = csv.DictWriter(f, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: _cell(row[key]) for key in columns})
    return str(out)


def write_records_csv(path: str | Path, records: list[ExperimentRecord]) -> str:
    ordered = sorted(records, key=record_sort_key)
    return write_rows_csv(path, ExperimentRecord.columns(), (r.to_dict() for r in ordered))


def write_spectrum_csv(path: str | Path, eigenvalues: np.ndarray) -> str:
    rows = ({"rank": i, "eigenvalue": float(v)} for i, v in enumerate(eigenvalues, start=1))
    return write_rows_csv(path, ["rank", "eigenvalue"], rows)


def _mode_rows(matrix: np.ndarray, labels: dict[str, Any]) -> Iterator[dict[str, Any]]:
    values = np.asarray(matrix, dtype=float)
    for t in range(values.shape[0]):
        for nu in range(values.shape[1]):
            yield {**labels, "t": t + 1, "nu": nu + 1, "value": float(values[t, nu])}


def write_mode_resolved_tables(path: str | Path, tables: Mapping[tuple[float, int], np.ndarray]) -> str:
    """(k, n, t, nu, value) rows for one (T, d) matrix per (k, N), sorted by N then k."""
    ordered = sorted(tables.items(), key=lambda item: (item[0][1], item[0][0]))
    rows = (row for (k, n), matrix in ordered for row in _mode_rows(matrix, {"k": k, "n": n}))
    return write_rows_csv(path, ["k", "n", "t", "nu", "value"], rows)
