"""Exception hierarchy shared by all mismatchkit modules."""


class MismatchKitError(Exception):
    """Base class for every error raised by the toolkit."""


class ValidationError(MismatchKitError, ValueError):
    """Input data violates a documented invariant."""


class DimensionMismatch(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class InfeasibleMetric(ValidationError):
    """The metric is -inf on a pair that the channel can actually produce."""


class NotRational(ValidationError):
    pass


class DegenerateLevels(ValidationError):
    """Float metric values are too close to be grouped into level sets reliably."""


class HypothesisViolated(ValidationError):
    pass


class CapExceeded(MismatchKitError):
    """An enumeration would exceed the configured size cap."""

    def __init__(self, size, cap, what="enumeration"):
        self.size = size
        self.cap = cap
        super().__init__(f"{what} of size {size} exceeds cap {cap}")


class NoConvergence(MismatchKitError):
    def __init__(self, tol, iterations, detail=""):
        self.tol = tol
        self.iterations = iterations
        msg = f"no convergence to tol={tol:g} after {iterations} iterations"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
