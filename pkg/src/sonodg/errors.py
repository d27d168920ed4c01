"""Exception types shared across the solver."""


class ConfigurationError(ValueError):
    """Invalid user-facing configuration (mesh sizes, degrees, config keys)."""


class ModelError(RuntimeError):
    """A physical-model assumption was violated (non-degeneracy, D > 0)."""


class SolverError(RuntimeError):
    """A linear or fixed-point solve failed to meet its accuracy contract."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class InternalError(RuntimeError):
    """A condition the implementation guarantees impossible was observed."""
