"""Exception types shared across the package.

The CLI maps these onto distinct exit codes, so library code should raise
the most specific one that applies rather than bare ValueError/RuntimeError.
"""


class ValidationError(ValueError):
    """Bad arguments, malformed configuration, or violated preconditions."""


class NumericError(RuntimeError):
    """NaN/Inf or other numeric breakdown during a computation.

    The message should identify where the problem surfaced (sample block,
    time index, ...) so large runs can be triaged without rerunning.
    """


class StabilityError(ValidationError):
    """An explicit FD time step violates the monotonicity/CFL bound."""

    def __init__(self, message: str, max_dt: float):
        super().__init__(message)
        self.max_dt = max_dt


class GenerationError(RuntimeError):
    """Random model generation exhausted its redraw budget."""
