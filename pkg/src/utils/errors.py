"""
Errors Module
=============
Error classes raised across the toolkit.

Every error derives from OrtSaeError so the CLI can turn any of them into a
single-line diagnostic. Errors about bad values also derive from ValueError.
"""

from typing import Optional


class OrtSaeError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(OrtSaeError, ValueError):
    """Operand dimensions do not agree."""


class InsufficientDataError(OrtSaeError, ValueError):
    """Not enough rows to compute a statistic."""


class ConfigurationError(OrtSaeError, ValueError):
    """
    A configuration value is missing, unknown or out of range.

    Attributes:
        key: Name of the offending configuration key (if known)
    """

    def __init__(self, message: str, key: Optional[str] = None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)


class ConsistencyError(OrtSaeError, ValueError):
    """Inputs that must come from the same evaluation do not match."""


class TrainingAbortedError(OrtSaeError):
    """Training hit a non-finite loss or gradient."""


class UndefinedInputError(OrtSaeError, ValueError):
    """A metric is undefined for the given input (e.g. zero variance)."""


class UndefinedBaselineError(OrtSaeError, ValueError):
    """The reference divergence of a relative score is zero."""


class FormatError(OrtSaeError, ValueError):
    """
    A binary file does not match its documented layout.

    Attributes:
        offset: Byte offset at which the problem was detected
    """

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")


class BadMagicError(FormatError):
    """The file does not start with the expected magic bytes."""


class TruncatedFileError(FormatError):
    """The header promises more bytes than the file holds."""


class DimensionOverflowError(FormatError):
    """The declared dimensions exceed what the format allows."""
