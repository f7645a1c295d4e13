"""Exception hierarchy shared by the solvers and the CLI."""


class ContagionError(Exception):
    """Base class for every error raised by contagion_sim."""

    exit_code = 1


class ValidationError(ContagionError):
    """Invalid model input, grid, or configuration value."""

    exit_code = 1


class NumericalError(ContagionError):
    """A solver could not produce a trustworthy number."""

    exit_code = 2


class InstabilityError(NumericalError):
    def __init__(self, message="instability detected"):
        super().__init__(message)


class ConvergenceError(NumericalError):
    def __init__(self, message="no convergence"):
        super().__init__(message)
