"""Exception and warning classes raised across the package."""


class ParseError(ValueError):
    """Malformed input file. Carries the offending 1-based line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DomainError(ValueError):
    """A value lies outside its admissible domain (e.g. a response not in {0, 1})."""


class IdentifiabilityError(ValueError):
    """A covariate column has no observed entry."""


class SingularCovarianceError(ValueError):
    """A covariance block could not be factorized, even after jitter."""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class NotPositiveDefiniteError(ValueError):
    """The SAEM covariance iterate stayed non positive definite after repair."""


class ImportanceSamplingError(ArithmeticError):
    """Every importance weight of a row underflowed; usually an outlying row."""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class SeparationWarning(UserWarning):
    """Newton iterates diverge, the classes look (quasi-)separated."""


class ConvergenceWarning(UserWarning):
    """An iterative solver hit its iteration cap before meeting its tolerance."""


class FisherInformationWarning(UserWarning):
    """The estimated information matrix is not positive definite."""


class SingularHessianError(ArithmeticError):
    """The logistic Hessian cannot be inverted (collinear design)."""
