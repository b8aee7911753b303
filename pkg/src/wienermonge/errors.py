"""Exception types.  The CLI maps them to exit codes."""


class InvalidInputError(ValueError):
    """Malformed or inconsistent input (exit code 3)."""


class DimensionMismatchError(InvalidInputError):
    pass


class MassMismatchError(InvalidInputError):
    pass


class ToleranceError(ArithmeticError):
    """A numerical check exceeded its stated tolerance (exit code 2)."""


class BranchingError(ToleranceError):
    """Two transport rays share an interior point.

    With a strictly convex norm this only happens when the alignment
    tolerance is wrong for the data, so the witness is kept for inspection.
    """

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class QuadratureError(ToleranceError):
    pass


class EstimateViolation(ToleranceError):
    """Measured evolution constant fell below ``1/M - tol``."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
