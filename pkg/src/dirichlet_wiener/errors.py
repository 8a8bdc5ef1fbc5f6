"""Exception types shared across the package."""


class ResolutionError(ValueError):
    """A requested basis index is finer than the grid of the path it acts on."""


class DivergentSeriesError(ValueError):
    """A truncated series was requested whose convergence condition fails."""


class ClassError(ValueError):
    """A cylindrical function is outside the class an operation accepts."""


class CertificateUnavailable(ValueError):
    """A weight model does not declare the bounds a certificate needs."""


class SimulationOverflowError(ArithmeticError):
    """The ensemble left the finite floating point range."""
