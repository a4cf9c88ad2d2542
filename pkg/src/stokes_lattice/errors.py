"""Exception hierarchy shared by the solvers, evaluators and the CLI."""


class StokesLatticeError(Exception):
    """Base class for all package errors."""


class ConfigurationError(StokesLatticeError, ValueError):
    """Invalid problem data: geometry, strengths or singularity placement."""


class DomainError(StokesLatticeError, ValueError):
    """Evaluation point lies outside the fluid region."""


class ProximityError(StokesLatticeError, ValueError):
    """Evaluation point is within the exclusion radius of a singularity image."""


class AccuracyNotMetError(StokesLatticeError, RuntimeError):
    """Truncated series could not reach the requested wall residual."""

    def __init__(self, message, achieved, floor=None):
        super().__init__(message)
        self.achieved = achieved
        #: rounding floor of the wall residual when that is what stopped the build
        self.floor = floor


class ConvergenceError(StokesLatticeError, RuntimeError):
    """An iterative procedure (Newton, quadrature, least squares) failed."""
