"""Exception and warning types shared across the package."""

from numpy.linalg import LinAlgError


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation."""


class ParameterError(ValueError):
    """Invalid configuration or hyperparameter."""


class SingularDesignError(LinAlgError):
    """Design or precision matrix too ill-conditioned to solve."""


class InsufficientDataError(ValueError):
    """Not enough (non-missing) data for the requested operation."""


class NumericalWarning(RuntimeWarning):
    """An update was skipped or rolled back for numerical reasons."""
