"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class SeriesConvergenceError(RuntimeError):
    """A series needed more terms than ``SeriesControl.max_terms`` allows."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


class EnvelopeViolation(RuntimeError):
    """A thinning envelope was found below the intensity it should dominate."""


class ResolutionError(RuntimeError):
    """The time step is too coarse for the requested crossing resolution."""


class StabilizationError(RuntimeError):
    """The flow counter did not stabilize over the supplied epsilon sequence.

    The finest trace computed is attached as ``trace``.
    """

    def __init__(self, message, trace=None, epsilon=None):
        super().__init__(message)
        self.trace = trace
        self.epsilon = epsilon


class UnmarkedTrajectoryError(RuntimeError):
    """A trajectory needed for the flow decomposition has no absorption mark."""


class CapacityError(ValueError):
    """More interior particles than the triangular array can hold."""


class InsufficientSampleError(ValueError):
    """Too few samples, or too few pooled cells, for a statistical test."""


class StepCapExceeded(RuntimeError):
    """An internal path simulation hit its step cap before the horizon."""
