"""Exception types shared across the package."""


class MassweightError(Exception):
    """Base class for all errors raised by massweight."""


class InvalidRecord(MassweightError, ValueError):
    """A sample record violates its invariants (non-positive mass, empty key)."""


class MassMismatch(MassweightError, ValueError):
    """A key was seen again with a different mass or f-value."""


class InputFormatError(MassweightError, ValueError):
    """A sample file could not be parsed."""


class DomainError(MassweightError, ValueError):
    """An argument lies outside the domain where a formula is defined."""


class DimensionError(MassweightError, ValueError):
    pass


class NoConvergence(MassweightError, RuntimeError):
    pass


class TooLarge(MassweightError, ValueError):
    """Exact enumeration would exceed the composition cap."""
