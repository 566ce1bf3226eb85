"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes, so every failure a user can trigger
should surface as one of the classes below.
"""

from __future__ import annotations


class MotionFMError(Exception):
    """Base class for all package errors."""

    category = "error"


class ShapeError(MotionFMError, ValueError):
    category = "shape"


class NumericError(MotionFMError, ArithmeticError):
    """A computation produced NaN/Inf or hit a numerical precondition."""

    category = "numeric"


class NotPSDError(NumericError):
    category = "not-psd"


class ConfigError(MotionFMError, ValueError):
    category = "config"


class FormatError(MotionFMError, ValueError):
    """Malformed motion file or checkpoint."""

    category = "format"


class TrainingDiverged(NumericError):
    """Training loss became non-finite.

    ``checkpoint`` holds the last parameters that produced a finite loss.
    """

    category = "diverged"

    def __init__(self, message: str, checkpoint=None, step: int | None = None):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.step = step
