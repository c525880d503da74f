"""oqnet: exact Gaussian dynamics and heat transport for linear open oscillator networks."""

__version__ = "0.1.0"

from .model import NetworkSpec, Region, Reservoir, projector, validate
from .spectral import PowerLawDensity, TabulatedDensity

__all__ = [
    "__version__",
    "NetworkSpec",
    "Region",
    "Reservoir",
    "projector",
    "validate",
    "PowerLawDensity",
    "TabulatedDensity",
]
