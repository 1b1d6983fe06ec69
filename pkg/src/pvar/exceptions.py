"""Exception hierarchy shared by all pvar modules."""


class PvarError(Exception):
    """Base class for every error raised by the package."""


class InvalidModel(PvarError, ValueError):
    pass


class DimensionMismatch(PvarError, ValueError):
    pass


class NotCausal(PvarError):
    def __init__(self, spectral_radius):
        super().__init__(f"model is not causal (companion spectral radius {spectral_radius:.6g})")
        self.spectral_radius = spectral_radius


class CholeskyFailure(PvarError):
    def __init__(self, season):
        super().__init__(f"innovation covariance of season {season} is not positive definite")
        self.season = season


class InsufficientHistory(PvarError):
    pass


class SingularDesign(PvarError):
    def __init__(self, season, condition):
        super().__init__(f"regressor cross-product of season {season} is singular (condition {condition:.3g})")
        self.season = season
        self.condition = condition


class SingularGlsSystem(PvarError):
    def __init__(self, season):
        super().__init__(f"GLS system of season {season} is singular")
        self.season = season


class MissingConstraints(PvarError):
    pass


class InsufficientSample(PvarError):
    pass


class NearSingularA1(PvarError):
    pass


class EmptyWeights(PvarError, ValueError):
    pass


class QuadratureWarning(UserWarning):
    """Issued when the Imhof quadrature does not reach the requested tolerance."""


class DegenerateVariance(PvarError):
    def __init__(self, season, component):
        super().__init__(f"residual variance of component {component} in season {season} is not positive")
        self.season = season
        self.component = component


class SingularC0(PvarError):
    pass


class SingularJ(PvarError):
    def __init__(self, season):
        super().__init__(f"residual covariance feeding J for season {season} is singular")
        self.season = season


class InvalidFactor(PvarError, ValueError):
    pass


class UnknownDgp(PvarError, KeyError):
    pass


class ReplicationFailure(PvarError):
    pass


class ParseError(PvarError):
    def __init__(self, line, message="malformed CSV"):
        super().__init__(f"line {line}: {message}")
        self.line = line


class NonNumeric(PvarError):
    def __init__(self, column, line):
        super().__init__(f"non-numeric value in column {column!r} at line {line}")
        self.column = column
        self.line = line


class TooShort(PvarError):
    pass
