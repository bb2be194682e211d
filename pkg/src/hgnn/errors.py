"""Exception hierarchy shared across the toolkit."""


class HGNNError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ValidationError(HGNNError, ValueError):
    """Bad input: malformed data, dimension mismatch, out-of-range argument."""

    exit_code = 2


class ParseError(ValidationError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyInputError(ValidationError):
    pass


class DimensionError(ValidationError):
    pass


class ConfigError(ValidationError):
    def __init__(self, path, message):
        self.path = path
        self.msg = message
        super().__init__(f"{path}: {message}")


class NumericError(HGNNError, ArithmeticError):
    exit_code = 3


class NumericOverflowError(NumericError):
    def __init__(self, layer, iteration):
        self.layer = layer
        self.iteration = iteration
        super().__init__(f"non-finite features in layer {layer} at iteration {iteration}")


class NonConvergenceError(NumericError):
    pass


class DivergenceError(NumericError):
    pass
