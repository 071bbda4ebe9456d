"""Exception types raised by rtpinn."""


class RtPinnError(Exception):
    """Base class for all library errors."""


class ConfigurationError(RtPinnError, ValueError):
    """Invalid or inconsistent run/problem configuration."""


class UnsupportedDimensionError(RtPinnError, ValueError):
    pass


class UnsupportedOrderError(RtPinnError, ValueError):
    pass


class ContractViolation(RtPinnError, ValueError):
    """A caller broke an operation's precondition (shape, domain membership)."""


class NumericalOverflowError(RtPinnError, FloatingPointError):
    """Non-finite value produced inside a network layer or loss."""

    def __init__(self, message, layer=None, points=None):
        super().__init__(message)
        self.layer = layer
        self.points = points


class DomainError(RtPinnError, ValueError):
    """Argument outside the mathematical domain of a function."""
