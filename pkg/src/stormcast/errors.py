"""Exception and warning types raised across stormcast."""


class StormcastError(Exception):
    """Base class for all library errors."""


# series / panel
class EmptySeries(StormcastError, ValueError):
    pass


class DuplicateName(StormcastError, ValueError):
    pass


class OutOfRange(StormcastError, ValueError):
    pass


# parsing
class FormatError(StormcastError, ValueError):
    """Malformed input file. ``line`` is 1-based; ``column`` is a header name."""

    def __init__(self, message, line=None, column=None, path=None):
        self.line = line
        self.column = column
        self.path = path
        super().__init__(message)

    def __str__(self):
        where = []
        if self.path is not None:
            where.append(str(self.path))
        if self.line is not None:
            where.append(f"line {self.line}")
        if self.column is not None:
            where.append(f"column {self.column}")
        msg = super().__str__()
        return f"{': '.join(where)}: {msg}" if where else msg


class EmptyEventSet(StormcastError, ValueError):
    pass


# numerics
class MissingValues(StormcastError, ValueError):
    pass


class TooShort(StormcastError, ValueError):
    pass


class TooFewObservations(StormcastError, ValueError):
    pass


class FitDiverged(StormcastError, RuntimeError):
    pass


class SingularDesign(StormcastError, ArithmeticError):
    pass


class DegenerateSeries(StormcastError, ValueError):
    pass


class DegenerateLabels(StormcastError, ValueError):
    pass


class SchemaMismatch(StormcastError, ValueError):
    pass


# imputation protocol
class MaskTooAggressive(StormcastError, ValueError):
    pass


class IncompleteCandidate(StormcastError, ValueError):
    pass


class NonConverged(UserWarning):
    """Iterative fit stopped at ``max_iter`` before meeting its tolerance."""


class SingularCovarianceWarning(UserWarning):
    pass
