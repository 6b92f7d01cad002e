"""Exception hierarchy.

The CLI maps these onto exit codes: configuration problems exit 1, numerical
failures exit 2, I/O failures exit 3.
"""


class NNGPError(Exception):
    """Base class for all package errors."""


class ConfigError(NNGPError, ValueError):
    """Invalid configuration or argument value."""


class DimensionMismatchError(ConfigError):
    pass


class InsufficientDataError(NNGPError, ValueError):
    pass


class MissingLayerError(NNGPError, KeyError):
    pass


class ResourceError(NNGPError, MemoryError):
    """Requested storage exceeds the configured cap."""


class NumericalError(NNGPError, ArithmeticError):
    """Base for failures that indicate a numerical or input bug."""


class DegenerateCovarianceError(NumericalError):
    pass


class PSDViolationError(NumericalError):
    pass


class NonPositiveValueError(NumericalError):
    """A log-log fit received a non-positive value (metric hit the noise floor)."""


class DegenerateGridError(NumericalError):
    pass
