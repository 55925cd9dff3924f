"""Exception hierarchy shared by all modules."""


class PulseDynError(Exception):
    """Base class for every error raised by the package."""


class DomainParameterError(PulseDynError, ValueError):
    pass


class GeometrySolveError(PulseDynError, RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class SingularEvaluationError(PulseDynError, ValueError):
    pass


class UnsupportedDomainError(PulseDynError, ValueError):
    pass


class KineticsNotBistableError(PulseDynError, ValueError):
    pass


class BistableRangeError(PulseDynError, ValueError):
    """Raised when v lies outside (v_min, v_max)."""

    def __init__(self, v: float, v_min: float, v_max: float):
        side = "v_min" if v <= v_min else "v_max"
        super().__init__(
            f"v={v!r} outside bistable range ({v_min:.12g}, {v_max:.12g}); violates {side}"
        )
        self.v = v
        self.endpoint = side


class FrontSolveError(PulseDynError, RuntimeError):
    pass


class MassInfeasibleError(PulseDynError, ValueError):
    pass


class AdmissibilityError(PulseDynError, ValueError):
    pass


class StiffnessError(PulseDynError, RuntimeError):
    pass


class UnstablePinningError(PulseDynError, ValueError):
    pass


class ThresholdUndefinedError(PulseDynError, ValueError):
    pass


class FlatPotentialError(PulseDynError):
    """The potential has no isolated critical points (rotationally symmetric domain)."""


class ResolutionError(PulseDynError, ValueError):
    pass


class DivergenceError(PulseDynError, RuntimeError):
    def __init__(self, message: str, dump: dict | None = None):
        super().__init__(message)
        self.dump = dump or {}


class NotSinglePulseError(PulseDynError, ValueError):
    def __init__(self, n_crossings: int):
        super().__init__(f"expected exactly 2 mid-level crossings, found {n_crossings}")
        self.n_crossings = n_crossings


class ConfigError(PulseDynError, ValueError):
    pass
