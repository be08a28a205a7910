"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Raised for invalid configuration values or architecture settings."""


class ContractViolation(ValueError):
    """Raised when a caller passes inputs that break an operation's preconditions."""


class NumericalError(ArithmeticError):
    """Raised when a non-finite value shows up in a loss or gradient."""


class InsufficientDataError(RuntimeError):
    """Raised when a buffer does not hold enough samples for the request."""


class CheckpointError(RuntimeError):
    """Raised when a checkpoint cannot be read, verified or matched."""
