"""Exception hierarchy shared by all modules."""


class AKFlowError(Exception):
    """Base class for all errors raised by akflow."""


class DomainError(AKFlowError):
    """A point (or a finite-difference stencil around it) lies outside the chart domain."""


class CompatibilityError(AKFlowError):
    """(Omega, J) fails the almost-Kaehler compatibility checks."""


class DegenerateInput(AKFlowError):
    """Metric not positive definite at working precision."""


DegenerateMetric = DegenerateInput


class VanishingNijenhuis(AKFlowError):
    """N-adapted coframes are undefined where the Nijenhuis tensor vanishes."""


class InconsistentDecomposition(AKFlowError):
    """A linear solve against a structure-equation decomposition left a large residual."""


class ConsistencyError(AKFlowError):
    """Two independent evaluations of the same quantity disagree."""


class InvalidFunction(AKFlowError):
    """Malformed holomorphic-function data."""


class PathThroughSingularity(AKFlowError):
    """A radial path meets a zero or pole of h."""


class NotInvariant(AKFlowError):
    """A form on a reductive space is not ad(h)-invariant."""


class IncompatiblePair(AKFlowError):
    """Invariant (Omega, g) do not define an almost-Kaehler pair."""


class BlowUp(AKFlowError):
    """Flow integration lost positivity of the metric."""

    def __init__(self, message: str, last_good_time: float):
        super().__init__(message)
        self.last_good_time = last_good_time


class EmptyCandidateSpace(AKFlowError):
    """Soliton fit requested with no candidate vector fields."""
