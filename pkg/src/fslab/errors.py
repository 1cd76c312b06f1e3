"""Exception hierarchy shared by all fslab modules."""

from __future__ import annotations


class FslabError(Exception):
    """Base class for every error raised by fslab."""


class ValidationError(FslabError, ValueError):
    """Bad parameters, bad config or malformed input (CLI exit status 2)."""


class TailCheckError(ValidationError):
    """A field is not small enough at the box boundary to stand in for R^N."""

    def __init__(self, message: str, ratio: float, required_extent: float | None = None):
        super().__init__(message)
        self.ratio = ratio
        self.required_extent = required_extent


class NumericalError(FslabError, ArithmeticError):
    """A numerical procedure failed (CLI exit status 3)."""


class ConvergenceError(NumericalError):
    """Iteration limit reached; ``best`` holds the best iterate found."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best
