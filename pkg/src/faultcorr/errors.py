"""Exception hierarchy shared across the pipeline stages."""

from __future__ import annotations


class FaultCorrError(Exception):
    """Base class. ``stage`` is filled in by the pipeline when it re-raises."""

    stage: str | None = None


class ValidationError(FaultCorrError, ValueError):
    """Bad input: malformed files, violated preconditions, invalid configs."""


class ParseError(ValidationError):
    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateSensorError(ValidationError):
    pass


class GapError(ValidationError):
    def __init__(self, message: str, missing_step: object = None) -> None:
        self.missing_step = missing_step
        super().__init__(message)


class RangeError(ValidationError, IndexError):
    pass


class InsufficientDataError(ValidationError):
    pass


class NumericalError(FaultCorrError, ArithmeticError):
    """Eigensolver failure or other non-recoverable numerical problem."""


class DegenerateSignalError(ValidationError):
    """A window with zero variance; its correlation is undefined."""
