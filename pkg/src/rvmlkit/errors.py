"""Exception types shared by all modules.

Exit-code mapping used by the CLI: ConfigurationError -> 2,
NumericalFailure -> 3.
"""


class ConfigurationError(ValueError):
    """Invalid user-supplied parameters (grid sizes, tolerances, schemas)."""


class NumericalFailure(RuntimeError):
    """A numerical routine did not reach its target accuracy.

    Carries the best available estimate and an error bound so callers can
    decide whether to proceed anyway.
    """

    def __init__(self, message, best_estimate=None, error_bound=None):
        super().__init__(message)
        self.best_estimate = best_estimate
        self.error_bound = error_bound


class SingularKernelError(ValueError):
    """Collision kernel evaluated on (or numerically at) its diagonal."""
