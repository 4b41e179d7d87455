"""Exception and warning classes.

Errors fall into three families that the command line maps to exit codes:
configuration problems, data problems and numerical failures.
"""


class MigrateRumError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(MigrateRumError):
    exit_code = 2


class DataError(MigrateRumError):
    exit_code = 3


class NumericalError(MigrateRumError):
    exit_code = 4


# -- data problems ---------------------------------------------------------

class MissingYear(DataError, KeyError):
    pass


class ZeroBase(DataError, ZeroDivisionError):
    pass


class YearMismatch(DataError, ValueError):
    pass


class EmptyInput(DataError, ValueError):
    pass


class SchemaError(DataError, ValueError):
    pass


class UnpairableError(DataError):
    """Destination or move year cannot be paired for a migrant."""

    def __init__(self, reason, message=None):
        self.reason = reason
        super().__init__(message or reason)


class CoverageError(DataError):
    def __init__(self, missing):
        self.missing = sorted(missing)
        preview = ", ".join(f"{c}/{y}" for c, y in self.missing[:10])
        more = "" if len(self.missing) <= 10 else f" (+{len(self.missing) - 10} more)"
        super().__init__(f"city statistics missing for city/year: {preview}{more}")


class EmptySubsample(DataError):
    pass


class NoResults(DataError):
    pass


class SubsetNotFound(DataError, KeyError):
    pass


class InsufficientPeriods(DataError, ValueError):
    pass


InsufficientTimePeriods = InsufficientPeriods


class DegenerateOutcome(DataError, ValueError):
    pass


# -- numerical failures ----------------------------------------------------

class DomainError(NumericalError, ValueError):
    pass


class NonConvergence(NumericalError):
    pass


class RankDeficient(NumericalError):
    def __init__(self, columns, message=None):
        self.columns = list(columns)
        super().__init__(message or f"collinear columns: {self.columns}")


class SingularWeightMatrix(NumericalError):
    pass


class NotOveridentified(NumericalError):
    pass


# -- warnings --------------------------------------------------------------

class SingletonClusterWarning(UserWarning):
    pass


class BoundaryWarning(UserWarning):
    pass


class SingularWeightMatrixWarning(UserWarning):
    pass


class UnidentifiedVarianceWarning(UserWarning):
    pass
