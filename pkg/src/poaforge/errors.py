"""Exception hierarchy shared by every module.

The CLI maps :class:`DomainError` (and subclasses) to exit code 1 and
:class:`InvariantError` to exit code 2.
"""


class PoaForgeError(Exception):
    """Base class for package errors."""


class DomainError(PoaForgeError, ValueError):
    """Input outside the documented domain of an operation."""


class StructuralError(DomainError):
    """Dimension mismatch or malformed instance data."""


class ValidationError(DomainError):
    """An instance violates a validity invariant."""


class UnsupportedClassError(DomainError):
    """Operation called on an instance of the wrong class."""


class ParseError(DomainError):
    """Malformed JSON instance; ``path`` names the offending field."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class InvariantError(PoaForgeError, RuntimeError):
    """An internal invariant failed; signals a bug rather than bad input."""


class OracleFailure(PoaForgeError, RuntimeError):
    """A numerical cross-check did not converge."""
