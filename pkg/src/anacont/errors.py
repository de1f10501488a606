"""Exception types raised by the package."""


class AnacontError(Exception):
    """Base class for all errors raised by anacont."""


class InvalidArgumentError(AnacontError, ValueError):
    pass


class DomainError(AnacontError, ValueError):
    """Evaluation point outside the region where an object is defined."""


class PoleEvaluationError(AnacontError, ZeroDivisionError):
    """Evaluation exactly at a pole (or at a zero of a reciprocal)."""


class DegenerateSystemError(AnacontError, ArithmeticError):
    pass


class SolverFailure(AnacontError, ArithmeticError):
    """A constrained solver hit its iteration cap or found no feasible point.

    ``diagnostics`` carries whatever the solver knew when it gave up.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class StageError(AnacontError):
    """Wraps a failure inside a pipeline stage, labelled with the stage name."""

    def __init__(self, stage, cause):
        super().__init__(f"{stage} step: {cause}")
        self.stage = stage
        self.cause = cause
