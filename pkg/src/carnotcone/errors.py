"""Exception types shared across the library."""


class CarnotError(Exception):
    """Base class for all library errors."""


class ConfigError(CarnotError):
    """Malformed frame definition, map definition, or run configuration."""


class SingularFrame(CarnotError):
    """Frame matrix not invertible (or numerically unusable) at a point."""


class GradingViolation(CarnotError):
    """Bracket coefficients escape the declared weighted filtration."""

    def __init__(self, message, residual=None, entries=None):
        super().__init__(message)
        self.residual = residual
        self.entries = entries or []


class JacobiViolation(CarnotError):
    """Candidate structure constants fail the Jacobi identity."""


class UnsupportedDepth(CarnotError):
    """Group operations requested beyond the supported nilpotency step."""


class OutOfChart(CarnotError):
    """A point, coordinate vector, or trajectory left the chart's domain."""


class StepFailure(CarnotError):
    """Adaptive ODE stepping underflowed the minimum step size."""


class NoConvergence(CarnotError):
    """Newton inversion failed to reach tolerance within the iteration cap."""

    def __init__(self, message, indices=None, residual=None):
        super().__init__(message)
        self.indices = indices
        self.residual = residual


class Diverging(CarnotError):
    """A ladder of measurements grows where a limit was expected.

    Carries the partial convergence report so callers can still inspect
    and record the per-rung values.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class OutOfDomain(CarnotError):
    """An argument or intermediate product lies outside the admissible
    domain of a group-side operation."""
