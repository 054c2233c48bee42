class TwoScaleError(Exception):
    """Base class for solver errors."""


class ConfigError(TwoScaleError, ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class ShapeError(TwoScaleError, ValueError):
    pass


class AdmissibilityError(TwoScaleError, ValueError):
    pass


class LinearSolverError(TwoScaleError, RuntimeError):
    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (relative residual {residual:.3e})")


class FixedPointError(TwoScaleError, RuntimeError):
    def __init__(self, message: str, last_update: float):
        self.last_update = last_update
        super().__init__(f"{message} (last update {last_update:.3e})")


class CouplingError(FixedPointError):
    pass


class StagnationError(TwoScaleError, RuntimeError):
    def __init__(self, message: str, diagnostics: dict):
        self.diagnostics = diagnostics
        super().__init__(message)


class SimulationError(TwoScaleError, RuntimeError):
    """Raised by the time loop; carries the partial trajectory."""

    def __init__(self, cause: Exception, trajectory):
        self.cause = cause
        self.trajectory = trajectory
        super().__init__(f"simulation stopped at step {len(trajectory.t) - 1}: {cause}")
