"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ParameterError(ValueError):
    """A numeric hyperparameter is out of its valid range."""


class NumericError(ArithmeticError):
    """Non-finite values reached an operation that cannot handle them."""


class ContractError(RuntimeError):
    """A caller broke an API precondition (e.g. backward on a non-scalar)."""


class ProtocolError(RuntimeError):
    """Predict/update calls arrived out of order."""


class ConfigError(ValueError):
    """Invalid experiment, stream or model configuration."""


class ParseError(ValueError):
    """Malformed dataset file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DataMissingError(FileNotFoundError):
    """A benchmark dataset file is not present in the data directory."""
