"""Exception types shared across the package.

The CLI maps ValidationError to exit code 1 and NumericalError to exit
code 2; library code raises nothing else on purpose.
"""


class FbcqeError(Exception):
    """Base class for package errors."""


class ValidationError(FbcqeError, ValueError):
    """Bad input: malformed operators, basis mismatches, invalid configs."""


class NumericalError(FbcqeError, RuntimeError):
    """A numerical procedure failed to converge or produced non-finite values."""
