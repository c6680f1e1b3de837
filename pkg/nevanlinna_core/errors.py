"""
Exception hierarchy

InputError subclasses mean the request itself is malformed (CLI exit 2);
NumericError subclasses mean a well-posed computation could not be carried
out reliably (CLI exit 3).
"""


class NevanlinnaError(Exception):
    """Base class for every error raised by nevanlinna_core."""


class InputError(NevanlinnaError):
    """Malformed expression, dimension mismatch or violated precondition."""


class ExprParseError(InputError):
    pass


class DimensionError(InputError):
    pass


class PreconditionError(InputError):
    pass


class DegenerateRationalError(InputError):
    """Rational function in u whose denominator vanishes identically."""


class NumericError(NevanlinnaError):
    """A computation failed to reach the requested accuracy."""


class DivisionByZeroError(NumericError):
    """Exact division by zero: the point lies on a divisor."""


class ExprOverflowError(NumericError):
    """Direct evaluation overflowed; use the log-modulus evaluator instead."""


class IndeterminatePhaseError(NumericError):
    pass


class NoConvergenceError(NumericError):
    pass


class WindingAmbiguousError(NumericError):
    pass


class DivisorSearchError(NumericError):
    """Localized a-points disagree with the argument-principle count."""


class NeedsDivisorOracleError(NumericError):
    pass


class IdenticallyZeroError(NumericError):
    pass


class InsufficientGrowthError(NumericError):
    pass


class NotASolutionError(NumericError):
    pass
