"""Exception hierarchy.

The CLI maps :class:`DataError` (and its subclasses) to exit code 2 and
:class:`NumericalError` to exit code 3.
"""


class RdGlobalError(Exception):
    """Base class for all package errors."""


class ConfigurationError(RdGlobalError, ValueError):
    """Invalid geometry, parameters or configuration."""


class DataError(RdGlobalError, ValueError):
    """Input data cannot support the requested computation."""


class DegenerateDataError(DataError):
    """A fold or side has too few observations."""

    def __init__(self, message, *, fold=None, side=None):
        where = []
        if fold is not None:
            where.append(f"fold {fold}")
        if side is not None:
            where.append(f"side {side}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.fold = fold
        self.side = side


class EmptyNeighborhoodError(DegenerateDataError):
    """No in-scope weighting observation shares a leaf with the query."""


class NumericalError(RdGlobalError, ArithmeticError):
    """Singular systems and other numerical failures."""
