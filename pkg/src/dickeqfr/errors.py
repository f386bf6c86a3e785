"""Exception hierarchy shared by all modules."""


class DickeQFRError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgument(DickeQFRError, ValueError):
    pass


class NumericFailure(DickeQFRError, ArithmeticError):
    pass


class ChargeNotConserved(DickeQFRError):
    """Raised when a block decomposition is requested for a charge that does not commute."""


class InfeasibleTarget(DickeQFRError, ValueError):
    pass


class TruncationGuardViolation(DickeQFRError):
    pass


class ConfigError(DickeQFRError, ValueError):
    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
