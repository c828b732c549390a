from typing import Any


class CoshflowsError(Exception):
    """Base class for all errors raised by coshflows."""


class InvalidArgumentError(CoshflowsError, ValueError):
    """An operation received arguments outside its domain."""


class InvalidKernelError(InvalidArgumentError):
    """A rate kernel is not double-directed (κ_xy > 0 without κ_yx > 0)."""


class InvalidTiltError(InvalidArgumentError):
    """A tilt rule violates the joint symmetry of its θ function."""


class InvalidTrajectoryError(InvalidArgumentError):
    """A trajectory does not satisfy the discrete continuity equation."""


class NumericalFailureError(CoshflowsError, RuntimeError):
    """A numerical procedure failed to produce a trustworthy result.

    Parameters
    ----------
    message : str
        Human readable description of the failure.
    report : dict, optional
        Diagnostics preserved for the caller, e.g. a condition estimate or the
        last residual of an iterative solver.
    """

    def __init__(self, message: str, report: dict[str, Any] | None = None):
        super().__init__(message)
        self.report = dict(report or {})


class BudgetExceededError(NumericalFailureError):
    """The wall-clock budget of an experiment ran out."""
