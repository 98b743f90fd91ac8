"""Exception and warning types shared across the package."""


class TsreError(Exception):
    """Base class for all package errors."""


class InvalidSizeError(TsreError, ValueError):
    pass


class TopologyError(TsreError, ValueError):
    """Graph is malformed or disconnected."""


class UnsupportedTopologyError(TsreError):
    """The requested procedure is not available for this graph shape."""


class InvalidRotationError(TsreError, ValueError):
    pass


class ShapeError(TsreError, ValueError):
    pass


class ResourceError(TsreError, MemoryError):
    pass


class NormalizationError(TsreError, ValueError):
    pass


class DomainError(TsreError, ValueError):
    pass


class BoundaryMismatchError(TsreError, ValueError):
    pass


class InsufficientDataError(TsreError, ValueError):
    pass


class GroupingError(TsreError, ValueError):
    pass


class ConfigError(TsreError, ValueError):
    pass


class ConvergenceError(TsreError, RuntimeError):
    """Iterative solver gave up; carries the best iterates seen."""

    def __init__(self, message, values=None, vectors=None, residuals=None, iterations=0):
        super().__init__(message)
        self.values = values
        self.vectors = vectors
        self.residuals = residuals
        self.iterations = iterations


class ExcitedStateError(TsreError, RuntimeError):
    """Penalty-based excited state collapsed onto the reference state."""

    def __init__(self, message, energy=None, overlap=None):
        super().__init__(message)
        self.energy = energy
        self.overlap = overlap


class DegeneracyWarning(UserWarning):
    """Canonical form or eigenpair is not unique at working precision."""


class KramersWarning(UserWarning):
    """Odd chain without field: every level is doubly degenerate."""
