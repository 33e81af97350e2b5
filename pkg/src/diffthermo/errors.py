"""Exception hierarchy shared by every module of the package."""


class DiffThermoError(Exception):
    """Base class for all package errors."""


class ShapeError(DiffThermoError, ValueError):
    """Array or matrix shapes do not agree."""


class StabilityError(DiffThermoError, ValueError):
    """A drift matrix is not Hurwitz (some eigenvalue has Re <= 0)."""


class DegeneracyError(DiffThermoError, ArithmeticError):
    """A linear system that must be solved is singular."""


class ParameterError(DiffThermoError, ValueError):
    """A model parameter violates its declared range."""


class DomainError(DiffThermoError, ValueError):
    """A field takes values outside the domain of the requested functional."""


class ReducibilityError(DiffThermoError, ArithmeticError):
    """A discrete generator has more than one stationary vector."""


class NumericalError(DiffThermoError, ArithmeticError):
    """A linear solve or time integration produced non-finite output."""


class DivergenceError(NumericalError):
    """A stochastic path blew up."""

    def __init__(self, path, step, message=None):
        self.path = path
        self.step = step
        super().__init__(message or f"path {path} became non-finite at step {step}")


class SamplingError(DiffThermoError, RuntimeError):
    """A Monte Carlo estimator received no usable samples."""


class CoverageError(SamplingError):
    """The sampling box does not contain the requested sublevel set."""


class InsufficientDataError(DiffThermoError, ValueError):
    """Too few snapshots or table points for a finite-difference estimate."""


class ConfigError(DiffThermoError, ValueError):
    """An experiment configuration is malformed."""
