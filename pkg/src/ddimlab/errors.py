"""Exception hierarchy shared across the package."""


class DDIMLabError(Exception):
    """Base class for all package errors."""


class DomainError(DDIMLabError, ValueError):
    """An input lies outside the domain of the operation (non-finite, negative variance, ...)."""


class UnsupportedProcessError(DDIMLabError, TypeError):
    """A closed-form operation was requested for a process that has none."""


class ConfigError(DDIMLabError, ValueError):
    """A configuration violates one of its invariants."""


class DegenerateDiffusionError(DDIMLabError, ValueError):
    """The diffusion coefficient vanishes where the operation divides by it."""


class OutOfSupportError(DDIMLabError, ValueError):
    """A grid score was queried where the density is below the floor."""


class BoundaryError(DDIMLabError, RuntimeError):
    """Too much probability mass left the Fokker-Planck grid."""


class FailureFractionError(DDIMLabError, RuntimeError):
    """More trajectories failed than the run tolerates.

    The partially failed result is attached as ``result``.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class StabilityError(ConfigError):
    """A grid-solver substep violates the advection Courant limit."""
