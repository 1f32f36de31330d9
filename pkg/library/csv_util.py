"""Numeric CSV tables: feature files, assignment matrices, priors and descriptors.

Lines starting with ``#`` are comments, except ``# grid N M`` which records the pixel grid.
Empty cells and ``nan`` mark missing values.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# Significant digits for floats written to CSV (lossless for float64).
FLOAT_DIGITS = 17


class ParseError(ValueError):
    """Raised for malformed input files; carries the 1-based line number."""

    def __init__(self, path: str | Path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


@dataclass
class Table:
    values: np.ndarray
    grid: tuple[int, int] | None = None

    @property
    def missing_rows(self) -> np.ndarray:
        return np.any(np.isnan(self.values), axis=1)


def _parse_cell(cell: str) -> float:
    cell = cell.strip()
    if cell == "" or cell.lower() == "nan":
        return np.nan
    return float(cell)


def read_table(path: str | Path) -> Table:
    """Read a rectangular numeric CSV, reporting the first bad line."""
    path = Path(path)
    rows: list[list[float]] = []
    grid = None
    width = None
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            parts = stripped[1:].split()
            if parts and parts[0] == "grid":
                try:
                    grid = (int(parts[1]), int(parts[2]))
                except (IndexError, ValueError) as e:
                    raise ParseError(path, line_no, f"bad grid header ({e})") from e
            continue
        try:
            row = [_parse_cell(c) for c in stripped.split(",")]
        except ValueError as e:
            raise ParseError(path, line_no, f"not a number ({e})") from e
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ParseError(path, line_no, f"expected {width} columns, got {len(row)}")
        rows.append(row)
    if not rows:
        raise ParseError(path, 1, "no data rows")
    values = np.array(rows, dtype=float)
    if grid is not None and grid[0] * grid[1] != len(values):
        raise ParseError(path, 1, f"grid {grid[0]}x{grid[1]} does not hold {len(values)} rows")
    logging.debug(f"read_table: {path} shape={values.shape} grid={grid}")
    return Table(values, grid)


def format_float(x: float) -> str:
    return f"{x:.{FLOAT_DIGITS}g}"


def write_table(
    values: np.ndarray,
    path: str | Path,
    grid: tuple[int, int] | None = None,
    header: str | None = None,
) -> None:
    values = np.atleast_2d(np.asarray(values, dtype=float))
    lines = []
    if header:
        lines.append(f"# {header}")
    if grid is not None:
        lines.append(f"# grid {grid[0]} {grid[1]}")
    lines += [",".join(format_float(x) for x in row) for row in values]
    Path(path).write_text("\n".join(lines) + "\n")
    logging.info(f"Wrote {values.shape[0]}x{values.shape[1]} table: {path}")
