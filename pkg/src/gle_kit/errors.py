"""Exception types shared across the toolkit."""


class GLEKitError(Exception):
    """Base class for all gle-kit specific errors."""


class InfeasibilityError(GLEKitError):
    """No stationary solution exists for the requested covariance/force pair."""


class FactorizationError(GLEKitError):
    """Spectral factorization produced an inconsistent density."""


class HorizonError(GLEKitError):
    """A quadrature horizon is too short for the requested tolerance."""


class EstimationError(GLEKitError):
    """An ensemble estimator was called with insufficient data."""


class TargetError(GLEKitError):
    """A design target is not admissible (indefinite or too rough)."""


class ConfigError(GLEKitError):
    """Aggregated configuration validation failure.

    ``errors`` holds one message per offending field, each prefixed with a
    JSON-pointer-style path such as ``/grid/dt``.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
