"""Exception types raised by the numerical modules."""


class StochFeynError(ValueError):
    """Base class for all precondition failures in this package."""


class GridMismatchError(StochFeynError):
    pass


class NormalizationError(StochFeynError):
    pass


class VanishingFieldError(StochFeynError):
    """A wave function or ratio dropped below the vanishing threshold."""


class PositivityError(StochFeynError):
    pass


class SupportError(StochFeynError):
    """A test function is not compactly supported inside the domain."""


class PreconditionError(StochFeynError):
    pass


class ConfigError(StochFeynError):
    pass
