"""Exception hierarchy shared across the package."""


class PmlgammError(Exception):
    """Base class for all package-specific errors."""


class DomainError(PmlgammError, ValueError):
    """A value is outside the mathematical domain of an operation.

    Examples: a negative Poisson response, evaluating a spline basis
    outside its knot range.
    """


class ConfigurationError(PmlgammError, ValueError):
    """Invalid configuration: bad option values, inconsistent settings,
    or inputs too degenerate to build the requested object."""


class DataFormatError(PmlgammError, ValueError):
    """Malformed input file. The message includes the offending line
    or key where available."""


class NumericError(PmlgammError, RuntimeError):
    """Numerical failure: non-convergence, loss of positive definiteness,
    or non-finite intermediate values."""
