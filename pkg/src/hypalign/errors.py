"""Exception types shared across the package.

The CLI maps :class:`ContractViolation` to exit code 2 and
:class:`NumericError` to exit code 3.
"""


class HypalignError(Exception):
    pass


class ContractViolation(HypalignError, ValueError):
    """Input violates a documented precondition (shape, sign, range)."""


class NumericError(HypalignError, ArithmeticError):
    """A computation left its valid numeric domain."""


class NumericDomainError(NumericError):
    pass


class DegenerateGeometryError(NumericError):
    """Cone apex at the origin, coincident points, or a similar singular case."""


class MagnitudeOverflowError(NumericError):
    pass


class SingularHessianError(NumericError):
    pass


class RootBracketError(NumericError):
    pass


class TooLargeError(HypalignError):
    pass


class NonFiniteLossError(NumericError):
    """Raised by the trainer; ``trace`` holds the offending step record."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
