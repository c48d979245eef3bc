"""Exception types shared across the package."""

from __future__ import annotations


class StackseqError(Exception):
    """Base class for all package-specific errors."""


class DomainError(StackseqError, ValueError):
    """A value violates the laminate domain model (labels, angles, targets)."""


class ShapeMismatchError(StackseqError, ValueError):
    """Tensor extents do not line up for the requested contraction."""


class ConvergenceError(StackseqError, RuntimeError):
    """Iterative eigensolver failed to converge.

    Carries the best iterate found so callers can inspect or reuse it.
    """

    def __init__(self, message: str, eigenvalue: float, vector, residual: float):
        super().__init__(message)
        self.eigenvalue = eigenvalue
        self.vector = vector
        self.residual = residual


class NotCollapsedError(StackseqError, ValueError):
    """A basis-state readout was requested from an uncollapsed MPS."""


class SizeGuardError(StackseqError, ValueError):
    """An exhaustive operation would exceed its configured size guard."""


class SamplingError(StackseqError, RuntimeError):
    """Sequence or target sampling could not produce the requested output."""

    def __init__(self, message: str, achieved: int | None = None):
        super().__init__(message)
        self.achieved = achieved


class UnsupportedAngleSetError(StackseqError, ValueError):
    """Operation requires an evenly spaced angle set."""


class EncodingError(StackseqError, ValueError):
    """Qubit encoding is only defined for four-state angle sets."""
