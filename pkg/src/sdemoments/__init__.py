"""Moment and density propagation for Ito SDEs along the Euler central path."""

from .errors import (
    ConfigError,
    DegenerateDensityError,
    NumericalError,
    RankDeficiencyError,
    SdeMomentsError,
)
from .models import (
    InitialCondition,
    TruncatedGaussianNoise,
    WienerNoise,
    kepler_circular_state,
    kepler_model,
    linear_model,
    polynomial_model,
)
from .multiindex import MultiIndex, enumerate_up_to
from .pce import propagate_random
from .propagation import propagate_fixed

__version__ = "0.1.0"
