"""Exception hierarchy shared by all modules."""


class ViscShockError(Exception):
    """Base class for every error raised by the package."""


class DomainError(ViscShockError, ValueError):
    """Argument outside the domain of a formula (e.g. t <= 0)."""


class ConfigurationError(ViscShockError, ValueError):
    """Grid, config file or parameter set is unusable."""


class PreconditionError(ViscShockError, ValueError):
    """Input violates a stated precondition of an operation."""


class NumericalResolutionError(ViscShockError, RuntimeError):
    """Quadrature or difference scheme did not converge under refinement."""


class HyperbolicityError(ViscShockError, ValueError):
    """Jacobian has complex, repeated or zero eigenvalues."""


class BasisError(ViscShockError, ValueError):
    """Outgoing modes and manifold masses do not span R^n."""


class UnsupportedShockError(ViscShockError, ValueError):
    """Undercompressive configuration (fewer than n + 1 incoming modes)."""


class NoConnectionError(ViscShockError, RuntimeError):
    """Shooting failed to connect the endstates."""


class ManifoldDimensionError(ViscShockError, RuntimeError):
    """Detected family dimension changes under tolerance refinement."""


class BlowUpError(ViscShockError, RuntimeError):
    """Time integration produced non-finite values."""

    def __init__(self, message, last_valid_time=None):
        super().__init__(message)
        self.last_valid_time = last_valid_time


class TrackingLossError(ViscShockError, RuntimeError):
    """Least-squares shift extraction failed to converge."""


class PerturbationTooLargeError(ViscShockError, RuntimeError):
    """Newton iteration for the asymptotic shift diverged."""


class FitError(ViscShockError, ValueError):
    """Rate fit impossible on the supplied series."""


class IncompleteRunError(ViscShockError, RuntimeError):
    """A run directory lacks the artifacts needed for a report."""
