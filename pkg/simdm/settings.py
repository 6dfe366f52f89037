"""Process settings read from the environment (optionally via a .env file)."""

import logging
import os
from typing import Optional

from dotenv import load_dotenv

from simdm.errors import SimDMError

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class SettingsError(SimDMError):
    """Exception raised for invalid SIMDM_* environment values."""

    exit_code = 2


class Settings:
    """Log level and default worker count for CLI runs."""

    def __init__(self, log_level: Optional[str] = None, jobs: Optional[int] = None):
        """
        Initialize settings.

        Args:
            log_level: Logging level name. If None, reads SIMDM_LOG (default INFO).
            jobs: Default worker count. If None, reads SIMDM_JOBS, falling back
                  to the number of available CPUs.

        Raises:
            SettingsError: If a value is not a known level or a positive integer.
        """
        level = (log_level or os.getenv("SIMDM_LOG") or "INFO").upper()
        if level not in _LEVELS:
            raise SettingsError(
                f"SIMDM_LOG must be one of {', '.join(_LEVELS)}, got {level!r}"
            )
        self.log_level = level

        if jobs is None:
            raw = os.getenv("SIMDM_JOBS")
            if raw:
                try:
                    jobs = int(raw)
                except ValueError:
                    raise SettingsError(f"SIMDM_JOBS must be an integer, got {raw!r}") from None
            else:
                jobs = _available_cpus()
        if jobs < 1:
            raise SettingsError(f"SIMDM_JOBS must be >= 1, got {jobs}")
        self.jobs = jobs

    @classmethod
    def from_env(cls) -> "Settings":
        """Load a .env file if present, then read SIMDM_* variables."""
        load_dotenv()
        return cls()

    def configure_logging(self) -> None:
        logging.basicConfig(level=self.log_level, format=LOG_FORMAT)


def _available_cpus() -> int:
    if hasattr(os, "sched_getaffinity"):
        return max(1, len(os.sched_getaffinity(0)))
    return max(1, os.cpu_count() or 1)
