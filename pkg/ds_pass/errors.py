"""
Exception hierarchy for the DS-PASS toolkit.

Every error carries the process exit code the command line maps it to:
    2 - usage / configuration problems
    3 - invalid inputs and malformed data
    4 - internal invariant violations
"""

from typing import Optional

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4


class DSPassError(Exception):
    """Base class of all toolkit errors."""

    exit_code: int = EXIT_INTERNAL


class ConfigError(DSPassError):
    """Bad command line usage, invalid configuration or a missing referenced file."""

    exit_code = EXIT_CONFIG


class InvalidInputError(DSPassError, ValueError):
    """An operation was called with inputs violating its preconditions."""

    exit_code = EXIT_DATA


class DataError(DSPassError):
    """A data file (image, label map, matches) could not be interpreted."""

    exit_code = EXIT_DATA


class FormatError(DataError):
    """Corrupt or truncated weight container."""

    def __init__(self, message: str, offset: Optional[int] = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class NoScorableClassesError(DataError):
    """Every requested class has an undefined IoU."""


class InvariantError(DSPassError):
    """An internal invariant was violated (non-finite tensors, desynchronised workers, ...)."""

    exit_code = EXIT_INTERNAL


class OutOfFrameError(InvalidInputError):
    """A point lies outside the raster it is looked up in."""
