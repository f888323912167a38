"""Exception hierarchy shared by all modules."""


class QStochError(Exception):
    """Base class for all errors raised by qstoch."""


class DimensionMismatch(QStochError, ValueError):
    pass


class SingularResolvent(QStochError, ArithmeticError):
    """The resolvent (I + i kappa E11) or (I - i kappa G11) is numerically singular."""


class NormTooLarge(QStochError, ValueError):
    """Raised when ||kappa E11|| >= 1 refuses the geometric series.

    The direct solve is still available on the ``direct`` attribute.
    """

    def __init__(self, message, direct=None, norm=None):
        super().__init__(message)
        self.direct = direct
        self.norm = norm


class NotUnitary(QStochError, ValueError):
    pass


class NotSelfAdjoint(QStochError, ValueError):
    pass


class UnitarityViolated(QStochError, ValueError):
    pass


class NonCommuting(QStochError, ValueError):
    pass


class SingularFactor(QStochError, ArithmeticError):
    pass


class SeriesDivergence(QStochError, ArithmeticError):
    pass


class OdeNotConverged(QStochError, ArithmeticError):
    pass


class NotConverging(QStochError):
    """A convergence sweep failed its ratio assertion.

    The table that was computed is kept on ``table`` so callers can still
    emit it.
    """

    def __init__(self, message, table=None):
        super().__init__(message)
        self.table = table


class GridTooCoarse(QStochError, ValueError):
    pass


class StepTooLarge(QStochError, ValueError):
    pass


class ParseError(QStochError, ValueError):
    pass


class SchemaError(QStochError, ValueError):
    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = list(errors) if errors else [message]
