"""Exception types shared across the package."""


class MeanflowError(Exception):
    """Base class for all package errors."""


class ConfigError(MeanflowError, ValueError):
    """Invalid configuration, resolution, generator spec or parameter range."""


class ExprSyntaxError(MeanflowError, ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset
        self.reason = message


class ExprEvalError(MeanflowError, ValueError):
    pass


class NonPositiveError(ConfigError):
    def __init__(self, minimum, node):
        super().__init__(f"field is not strictly positive: min {minimum!r} at node {node}")
        self.minimum = minimum
        self.node = node


class BlowupError(MeanflowError, FloatingPointError):
    """Raised when |u| exceeds the exponent overflow guard."""


class NoConvergence(MeanflowError, RuntimeError):
    def __init__(self, message, residual, iterations):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class StepUnderflow(MeanflowError, RuntimeError):
    """Raised when step rejections push dt below dt_min."""
