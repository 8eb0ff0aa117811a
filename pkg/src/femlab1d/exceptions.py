"""Exception types shared across the package."""


class FemLabError(Exception):
    """Base class for all package-specific failures."""


class InvalidPartitionError(FemLabError):
    pass


class UnsupportedRuleError(FemLabError):
    pass


class InvalidDegreeError(FemLabError):
    pass


class BoundaryMismatchError(FemLabError):
    pass


class IncompatibleSpacesError(FemLabError):
    pass


class DomainError(FemLabError):
    pass


class RegistryError(FemLabError):
    pass


class EllipticityError(FemLabError):
    pass


class BandwidthError(FemLabError):
    pass


class SingularMatrixError(FemLabError):
    pass


class DimensionError(FemLabError):
    pass


class ProjectionFailureError(FemLabError):
    pass


class InvalidExpansionOrderError(FemLabError):
    pass


class NewtonDivergenceError(FemLabError):
    """Newton iteration failed; carries the last residual norm."""

    def __init__(self, message, residual_norm=None):
        super().__init__(message)
        self.residual_norm = residual_norm


class ConfigError(FemLabError):
    """Configuration parsing or validation failure with a line number."""

    def __init__(self, message, lineno=0):
        super().__init__(f"line {lineno}: {message}" if lineno else message)
        self.lineno = lineno
