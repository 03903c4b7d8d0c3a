"""
Exception hierarchy for the secest toolkit.

Library code raises these; runners and the CLI catch ``SecestError`` and turn
it into a failed result instead of a traceback.
"""

from typing import Any, Optional


class SecestError(Exception):
    """Base class for all secest errors"""
    pass


class DimensionMismatch(SecestError):
    """Array shapes do not agree with the system dimensions"""
    pass


class InvalidSystem(SecestError):
    """System matrices violate a structural requirement"""
    pass


class UnobservableWindow(SecestError):
    """The stacked observability matrix has rank < n for this window"""

    def __init__(self, rank: int, n: int, window: int):
        super().__init__(f"Observability matrix has rank {rank} < n={n} for window T={window}")
        self.rank = rank
        self.n = n
        self.window = window


class BudgetTooLarge(SecestError):
    """Requested attack budget exceeds the number of (step, sensor) slots"""
    pass


class Infeasible(SecestError):
    """Linear program has no feasible point"""
    pass


class RankDeficient(SecestError):
    """Coding matrix is not full column rank"""
    pass


class InsufficientHistory(SecestError):
    """Fewer measurements are available than the decoding window needs"""

    def __init__(self, available: int, window: int):
        super().__init__(f"Need {window} measurements, have {available}")
        self.available = available
        self.window = window


class BoundUndefined(SecestError):
    """T-bound denominator is not positive for some subset"""
    pass


class CombinatorialBlowup(SecestError):
    """Exhaustive enumeration is too large and sampling is disabled"""
    pass


class OrderingViolation(SecestError):
    """Inputs that must be strictly ordered are not"""
    pass


class RiccatiDivergence(SecestError):
    """Riccati iteration did not converge"""
    pass


class UncontrollablePair(SecestError):
    """(A_o, B) is not controllable"""
    pass


class IllConditionedAssignment(SecestError):
    """Eigenvector matrix of the assignment is numerically singular"""
    pass


class NoImprovement(SecestError):
    """Pole perturbation could not raise the support profile to its target.

    The best design found is available as ``report``.
    """

    def __init__(self, message: str, report: Optional[Any] = None):
        super().__init__(message)
        self.report = report


class SingularInnovation(SecestError):
    """Innovation covariance is not invertible"""
    pass


class InvalidExperiment(SecestError):
    """Experiment configuration is out of range"""
    pass


class ComplexSpectrumWarning(UserWarning):
    """Closed-loop matrix has complex eigenvalues; a real basis is used instead"""
    pass
