"""Exception hierarchy shared by every lindiff module."""

from __future__ import annotations


class LindiffError(Exception):
    """Base class for errors raised by lindiff."""


class DomainError(LindiffError, ValueError):
    """An input violates the precondition of an operation."""


class DataParseError(DomainError):
    """A CSV data matrix could not be parsed."""

    def __init__(self, message: str, row: int | None = None, column: int | None = None) -> None:
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")


class SolverError(LindiffError, RuntimeError):
    """A numerical solve failed to converge or hit a singular point."""

    def __init__(self, message: str, residual: float | None = None, iterations: int | None = None) -> None:
        self.residual = residual
        self.iterations = iterations
        super().__init__(message)


class ConfigError(LindiffError, ValueError):
    """An experiment configuration is malformed or invalid."""
