"""Exception hierarchy shared by the numerical modules and the CLI."""

from typing import Optional


class SimDMError(Exception):
    """Base exception for simdm errors.

    Every error carries the process exit code the CLI reports for it.
    """

    exit_code: int = 3

    def __init__(self, message: str, exit_code: Optional[int] = None):
        self.message = message
        if exit_code is not None:
            self.exit_code = exit_code
        super().__init__(message)


class ArgumentError(SimDMError, ValueError):
    """Raised when an argument violates an operation's precondition."""

    exit_code = 2


class DomainError(SimDMError, ValueError):
    """Raised when a time, log-SNR or ratio lies outside the schedule's domain."""

    exit_code = 2


class ConfigError(SimDMError):
    """Raised when an experiment configuration fails validation."""

    exit_code = 2

    def __init__(self, message: str, field_paths: Optional[list[str]] = None):
        self.field_paths = field_paths or []
        super().__init__(message)


class NumericalError(SimDMError):
    """Raised when an estimator or solver produces non-finite values."""

    exit_code = 3


class ToleranceError(SimDMError):
    """Raised when a verification run misses an asserted tolerance."""

    exit_code = 1

    def __init__(self, inequality: str):
        self.inequality = inequality
        super().__init__(f"Tolerance check failed: {inequality}")
