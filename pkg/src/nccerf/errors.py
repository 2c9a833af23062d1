"""Exception hierarchy shared across the package.

Each class carries the CLI exit code it maps to.
"""


class NCCerfError(Exception):
    exit_code = 1


class ConfigError(NCCerfError, ValueError):
    """Bad configuration or a missing column."""

    exit_code = 2


class ValidationError(NCCerfError, ValueError):
    """Input data violates a dataset invariant."""

    exit_code = 2


class ParseError(ValidationError):
    """A CSV cell could not be parsed as a number."""


class NumericalError(NCCerfError, ArithmeticError):
    exit_code = 3


class IdentificationError(NumericalError):
    """The NCO regression carries no usable signal about the NCE.

    Raised when ``|theta_WZ|`` falls below tolerance, i.e. assumptions
    A6/A7 (W informative about U, Z informative about U) look violated.
    """


class StorageError(NCCerfError, OSError):
    exit_code = 4
