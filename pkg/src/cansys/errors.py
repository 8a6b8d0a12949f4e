"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class CanonicalSystemError(Exception):
    """Base class for every error raised by :mod:`cansys`."""


class ValidationError(CanonicalSystemError, ValueError):
    """Malformed input: a non-PSD cell, a bad file, a missing field."""

    def __init__(self, message, *, path=None, cell_index=None):
        self.path = path
        self.cell_index = cell_index
        parts = []
        if path is not None:
            parts.append(str(path))
        if cell_index is not None:
            parts.append(f"cell {cell_index}")
        prefix = ": ".join(parts)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class DomainError(CanonicalSystemError, ValueError):
    """An argument lies outside the domain of the operation."""


class PoleError(CanonicalSystemError, ZeroDivisionError):
    """A fractional linear map was evaluated at (or numerically near) its pole."""


class ReductionError(CanonicalSystemError, ValueError):
    """A reduction to canonical form broke down at a specific index."""


class NonContractionError(CanonicalSystemError, ValueError):
    """The Picard map is not a contraction on the requested interval."""


class ConvergenceError(CanonicalSystemError, RuntimeError):
    """An iterative procedure stopped before meeting its tolerance.

    ``partial`` carries whatever best estimate was available.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
