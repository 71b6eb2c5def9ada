"""Exception types shared across the package."""


class ObsFmmError(Exception):
    """Base class for all package errors."""


class ArgumentError(ObsFmmError, ValueError):
    """An argument is out of range or has the wrong shape."""


class ContractError(ArgumentError):
    """An input violates a structural precondition (e.g. symmetry)."""


class LevelError(ArgumentError):
    """A box-tree query was made at a level where it is undefined."""


class DomainError(ArgumentError):
    """The observation domain is degenerate."""


class NumericalError(ObsFmmError, ArithmeticError):
    """A numerical routine failed."""


class DefinitenessError(NumericalError):
    """A matrix expected to be positive definite is not.

    ``pivot`` is the 1-based leading-minor index at which the Cholesky
    factorisation broke down, when known.
    """

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot
