"""Exception hierarchy shared by every roughctl module."""


class RoughCtlError(Exception):
    pass


class InvalidParameterError(RoughCtlError, ValueError):
    """A parameter is outside its admissible range."""


class InvalidWindowError(InvalidParameterError):
    pass


class DomainError(RoughCtlError, ValueError):
    """An evaluation point or control value lies outside its domain."""


class IncompatibleGridError(RoughCtlError, ValueError):
    pass


class NumericalFailureError(RoughCtlError, ArithmeticError):
    """A quadrature or ODE step produced a nonfinite or inconsistent value."""


class ConvergenceError(NumericalFailureError):
    def __init__(self, message, iterations=None, contraction=None):
        super().__init__(message)
        self.iterations = iterations
        self.contraction = contraction


class DivergenceError(NumericalFailureError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class UnsupportedRegimeError(RoughCtlError):
    """Raised when a relaxed-control operation is asked to handle a control-dependent diffusion."""


class InstanceSizeError(RoughCtlError):
    pass


class OptimizationFailureError(RoughCtlError):
    pass


class ConfigError(RoughCtlError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line
