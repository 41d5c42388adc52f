"""Exception types shared across the package."""

from __future__ import annotations


class InvalidArgumentError(ValueError):
    """Raised when an input violates a documented precondition."""


class NumericalFailureError(ArithmeticError):
    """Raised when a computation cannot produce a valid numerical result.

    ``details`` carries whatever diagnostics the raising site has (matrix
    name, offending indices, jitter tried, ...).
    """

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details


class ParseError(ValueError):
    """Raised for malformed input files or configuration documents."""
