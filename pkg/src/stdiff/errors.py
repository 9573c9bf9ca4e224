"""Exception types shared across the package."""


class StdiffError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(StdiffError):
    """Operands live on tori of different dimension."""


class PrecisionMismatch(StdiffError):
    """Operands carry different fixed-point precisions."""


class PrecisionExhausted(StdiffError):
    """The requested computation needs more fractional bits than available.

    Carries ``required_bits`` when the necessary precision is known.
    """

    def __init__(self, message: str, required_bits: int | None = None):
        super().__init__(message)
        self.required_bits = required_bits


class OutOfRange(StdiffError):
    """A numeric argument lies outside its supported range."""


class DegenerateRadius(StdiffError):
    """A ball radius fell below the representable fixed-point grid."""


class UnsupportedDimension(StdiffError):
    """The operation is only implemented for specific dimensions."""


class RuleExhausted(StdiffError):
    """A generator rule has no matrix for the requested step."""


class SearchBudgetExceeded(StdiffError):
    """An enumeration or search exceeded its configured budget."""


class WitnessNotFound(StdiffError):
    """No witness satisfying the requested certificate was found in budget."""


class ConfigError(StdiffError):
    """A configuration document is malformed or inconsistent."""
