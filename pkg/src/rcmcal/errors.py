"""Exception types shared across the toolkit."""


class UnreachableTargetError(ValueError):
    """Target pose lies outside the reachable workspace.

    ``limit`` names the joint or constraint that was violated.
    """

    def __init__(self, message: str, limit: str | None = None):
        super().__init__(message)
        self.limit = limit


class DegenerateTargetError(ValueError):
    """Target is geometrically degenerate (e.g. the tool direction is undefined)."""


class DegenerateInputError(ValueError):
    """Input data carries no usable geometric information."""


class InsufficientDataError(ValueError):
    """Fewer samples than the operation requires."""


class ConvergenceError(RuntimeError):
    """Iterative solver exhausted its iteration budget.

    Carries the best iterate seen (``best``) and its residual norm (``residual``).
    """

    def __init__(self, message: str, best=None, residual: float = float("nan")):
        super().__init__(message)
        self.best = best
        self.residual = residual


class IllPosedProblemError(RuntimeError):
    """Normal equations are rank deficient for the requested free parameters.

    ``parameters`` lists the suspect parameter names.
    """

    def __init__(self, message: str, parameters=()):
        super().__init__(message)
        self.parameters = tuple(parameters)


class DivergedError(RuntimeError):
    """Residual evaluation produced non-finite values."""


class RankDeficientError(ValueError):
    """Geometric fit lacks the rank needed for a unique solution."""
