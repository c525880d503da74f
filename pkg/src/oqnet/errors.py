"""Exception and warning taxonomy shared by all oqnet modules."""

from __future__ import annotations


class OqnetError(Exception):
    """Base class for all oqnet errors."""


class StructuralError(OqnetError):
    """Network description violates a structural invariant (overlap, asymmetry)."""


class UnknownRegion(OqnetError):
    """Requested region id does not exist in the network."""


class DivergentKernel(OqnetError):
    """A kernel integral (typically the zero-time damping kernel) diverges."""


class NonConvergence(OqnetError):
    """Time stepping blew up, usually because the renormalized potential is indefinite."""


class SingularAtFrequency(OqnetError):
    """Frequency-domain response matrix is singular: undamped resonance."""

    def __init__(self, omega: float, message: str | None = None):
        self.omega = omega
        super().__init__(message or f"response matrix singular at omega={omega:.6g}: "
                                    "undamped resonance, stationary state not reached")


class GridMismatch(OqnetError):
    """Requested time is not on the solved grid."""


class CoefficientSingularity(OqnetError):
    """Master-equation coefficient extraction singular at a non-isolated set of times."""


class NotStationary(OqnetError):
    """Stationary-regime quantity requested but the network response does not decay."""


class QuadratureFailure(OqnetError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class RecurrenceWindowExceeded(OqnetError):
    """Discretized-bath evolution requested beyond its validity window."""


class WindowTooNoisy(OqnetError):
    """Linear fit over the quasi-stationary window has too large a residual."""


class InconclusiveWindow(OqnetError):
    """Decay analysis cannot decide within the solved time window."""


class RegimeViolation(OqnetError):
    """Requested asymptotic regime assumption does not hold."""


class ConfigError(OqnetError):
    """Experiment configuration is malformed; the message names the offending key."""


class StepTooCoarseWarning(UserWarning):
    """Advisory: time step does not resolve the fastest frequency or the cutoff."""


class RegimeViolationWarning(UserWarning):
    """Advisory: low-temperature expansion used outside its stated regime."""


class StabilityAdvisory(UserWarning):
    """Advisory: renormalized potential is not positive definite."""
