class DimensionError(ValueError):
    """Array shapes or sizes are inconsistent."""


class FactorizationError(ValueError):
    """A covariance matrix could not be Cholesky-factorized."""


class DegenerateFitError(RuntimeError):
    """A fit left (numerically) no residual; ``stage`` names where."""

    def __init__(self, message: str, stage: str = "noise"):
        super().__init__(message)
        self.stage = stage


class ConvergenceError(RuntimeError):
    """An iterative stage did not converge where convergence is required."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
