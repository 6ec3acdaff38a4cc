"""Exception hierarchy shared by every module of the package."""


class ColeHopfError(Exception):
    """Base class for all package errors."""


class ParseError(ColeHopfError, ValueError):
    """Malformed expression text.

    ``offset`` is the byte offset into the UTF-8 encoded source where the
    problem was detected.
    """

    def __init__(self, message, offset=0):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class UnboundParameterError(ColeHopfError, KeyError):
    def __init__(self, names):
        self.names = tuple(sorted(names))
        super().__init__(f"unbound parameter(s): {', '.join(self.names)}")

    def __str__(self):
        return self.args[0]


class EvaluationError(ColeHopfError, ArithmeticError):
    """A subexpression produced a non-finite value (domain violation)."""

    def __init__(self, message, subexpr=None):
        super().__init__(message)
        self.subexpr = subexpr


class DegenerateError(ColeHopfError, ValueError):
    """Degenerate family parameters, vanishing coefficients or a broken
    problem invariant (e.g. non-positive diffusivity)."""


class SolverError(ColeHopfError, RuntimeError):
    """Numerical failure: step-size underflow, quadrature or bracketing
    failure, non-finite solver state."""


class StageError(ColeHopfError):
    """Failure inside a multi-stage pipeline, tagged with the stage name."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
