"""Exception types raised by the estimation stack."""


class EstimatorError(RuntimeError):
    """Base class for failures of an estimation step."""


class IllConditionedError(EstimatorError, ArithmeticError):
    """A linear system's condition estimate exceeds the configured gate."""

    def __init__(self, what: str, cond: float, threshold: float):
        super().__init__(f"{what}: condition estimate {cond:.3e} exceeds {threshold:.1e}")
        self.cond = cond
        self.threshold = threshold


class RankDeficiencyError(EstimatorError):
    """The data matrix does not carry ``rank`` separable components."""


class SizeError(EstimatorError, ValueError):
    """Too few samples for the requested model order."""


class DegeneracyError(EstimatorError):
    """Two spikes collided during refinement."""
