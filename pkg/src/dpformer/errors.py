"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ContractError(ValueError):
    """A documented precondition was violated by the caller."""


class ConfigError(ValueError):
    """Invalid configuration values or combinations."""


class LifecycleError(RuntimeError):
    """Pool / head growth called out of order."""


class NumericError(ArithmeticError):
    """Non-finite value encountered."""


class FormatError(ValueError):
    """Malformed dataset or checkpoint file."""


class IncompatibleCheckpointError(FormatError):
    """Checkpoint written by an unsupported format version."""
