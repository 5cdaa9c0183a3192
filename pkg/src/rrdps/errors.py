"""Exception types raised by the key-rate library."""


class RRDPSError(ValueError):
    """Base class for all library errors."""


class DomainError(RRDPSError):
    """An argument lies outside the mathematical domain of a function."""


class DegenerateInputError(RRDPSError):
    """A quantity used as a divisor vanished (e.g. zero gain or zero yield)."""


class OrderingError(RRDPSError):
    """Decoy intensities violate the ordering required by a bound."""


class InvalidBoundsError(RRDPSError):
    """Yield/error bounds handed to the rate formula are out of range."""


class InsufficientObservationsError(RRDPSError):
    """Too few decoy observations for the requested decoy tier."""
