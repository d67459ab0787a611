"""CSV adapter for N x d data matrices (one sample per row, no header)."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterator

import numpy as np

from skills.lindiff.errors import DataParseError


def _decoded_lines(path: Path) -> Iterator[str]:
    for number, raw in enumerate(path.read_bytes().splitlines(keepends=True), start=1):
        try:
            yield raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DataParseError(f"invalid UTF-8 in {path} at byte {exc.start}: {exc.reason}", row=number) from None


def load_data_matrix(csv_path: str | Path) -> np.ndarray:
    path = Path(csv_path).expanduser().resolve()
    if not path.exists():
        raise DataParseError(f"CSV file not found: {path}")

    rows: list[list[float]] = []
    width: int | None = None
    reader = csv.reader(_decoded_lines(path))
    for cells in reader:
        line = reader.line_num
        if not cells or all(not c.strip() for c in cells):
            continue
        if cells[0].lstrip().startswith("#"):
            continue
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise DataParseError(f"expected {width} columns, found {len(cells)}", row=line)
        values: list[float] = []
        for col, cell in enumerate(cells, start=1):
            try:
                value = float(cell)
            except ValueError:
                raise DataParseError(f"not a number: {cell!r}", row=line, column=col) from None
            if not math.isfinite(value):
                raise DataParseError(f"non-finite value: {cell!r}", row=line, column=col)
            values.append(value)
        rows.append(values)

    if not rows:
        raise DataParseError(f"no data rows in {path}")
    return np.asarray(rows, dtype=float)


def write_data_matrix(csv_path: str | Path, data: np.ndarray) -> Path:
    path = Path(csv_path).expanduser().resolve()
    matrix = np.atleast_2d(np.asarray(data, dtype=float))
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        for row in matrix:
            writer.writerow(format(float(v), ".17g") for v in row)
    return path
