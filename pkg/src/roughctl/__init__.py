"""Young integrals, Doss-Sussmann solvers and relaxed optimal control for scalar rough ODEs."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    ConvergenceError,
    DivergenceError,
    DomainError,
    IncompatibleGridError,
    InstanceSizeError,
    InvalidParameterError,
    InvalidWindowError,
    NumericalFailureError,
    OptimizationFailureError,
    RoughCtlError,
    UnsupportedRegimeError,
)
from .signal import FbmSpec, GridPath, fbm_generate, holder_seminorm  # noqa: E402
