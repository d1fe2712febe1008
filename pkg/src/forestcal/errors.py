"""Exception types shared across the package."""

from __future__ import annotations


class ValidationError(ValueError):
    """Invalid input data or configuration (CLI exit code 1)."""


class TreeValidationError(ValidationError):
    """A classification tree violates its structural invariants."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("invalid classification tree: " + "; ".join(self.violations))


class DataFileError(ValidationError):
    """Malformed record in a data file, with file and line context."""

    def __init__(self, path, line: int | None, message: str):
        self.path = str(path)
        self.line = line
        where = self.path if line is None else f"{self.path}:{line}"
        super().__init__(f"{where}: {message}")
