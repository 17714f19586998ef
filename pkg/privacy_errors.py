from __future__ import annotations


class PdpInputError(ValueError):
    """Raised when an input violates a documented precondition."""


class EnumerationLimitError(PdpInputError):
    """Raised when an exact enumeration would exceed the configured state cap."""


class PdpNumericError(RuntimeError):
    """Raised when a report carries divergent leakage and strict handling is requested."""


__all__ = ["EnumerationLimitError", "PdpInputError", "PdpNumericError"]
