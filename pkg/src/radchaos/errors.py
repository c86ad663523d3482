"""Exception types shared across the package.

The CLI maps these onto exit codes: ``CheckFailure`` -> 1, ``InputError`` -> 2,
``ResourceError`` -> 3.
"""


class InputError(ValueError):
    """Malformed or out-of-range input (wrong tuple length, bad order, ...)."""


class ResourceError(RuntimeError):
    """A computation would exceed the configured enumeration or memory cap."""


class CheckFailure(AssertionError):
    """A verification check did not hold."""
