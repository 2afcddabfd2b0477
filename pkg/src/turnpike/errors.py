"""Exception hierarchy shared by the solvers, diagnostics and the CLI."""


class TurnpikeError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ArgumentError(TurnpikeError, ValueError):
    """Bad shapes, non-positive tolerances, unknown names."""

    exit_code = 2


class ConvergenceError(TurnpikeError):
    """An iterative solver ran out of iterations.

    ``residuals`` carries the last residual values seen by the solver.
    """

    exit_code = 3

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class StiffStepError(ConvergenceError):
    """Per-step Newton iteration of the implicit time stepper failed."""

    def __init__(self, message, step_index, residuals=None):
        super().__init__(message, residuals)
        self.step_index = step_index


class LinearAlgebraError(TurnpikeError):
    """A linear system that must be solved is (numerically) singular."""

    exit_code = 3


class DecompositionError(TurnpikeError):
    """The spectrum touches the splitting line; no stable/unstable split exists."""

    exit_code = 4


class NotApplicableError(TurnpikeError):
    """A diagnostic's hypothesis is not met (empty interval, alpha == 0, ...)."""

    exit_code = 4


class FitUnavailableError(TurnpikeError):
    """Not enough non-degenerate data to fit an exponential profile."""

    exit_code = 4
