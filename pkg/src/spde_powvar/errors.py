"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where a formula or routine is valid."""


class SizeError(DomainError):
    """A requested problem size exceeds a configured cap."""


class DegenerateSampleError(DomainError):
    """A sample carries no information for the requested estimator."""


class NumericalError(ArithmeticError):
    """A numerical procedure failed to reach a usable result."""


class AccuracyError(NumericalError):
    """Adaptive quadrature stopped before meeting its tolerance.

    Attributes
    ----------
    value : float
        Best available estimate.
    est_error : float
        Error estimate attached to ``value``.
    """

    def __init__(self, message, value, est_error):
        super().__init__(message)
        self.value = value
        self.est_error = est_error
