"""Exception types raised across the package."""


class NsacError(Exception):
    """Base class for all package errors."""


class DegenerateParametrization(NsacError):
    """Curve speed |X'(s)| falls below tolerance somewhere."""


class SelfIntersection(NsacError):
    """Sampled curve segments cross each other."""


class NoConvergence(NsacError):
    """An iterative procedure did not converge."""


class NotADoubleWell(NsacError):
    """Potential violates the double-well assumptions."""


class NonIntegrable(NsacError):
    """sqrt(2 f) vanishes away from the wells."""


class IncompatibleRHS(NsacError):
    """Right-hand side is not orthogonal to the kernel of the linearized operator."""

    def __init__(self, value, tol):
        self.value = float(value)
        self.tol = float(tol)
        super().__init__(f"compatibility integral {self.value:.6e} exceeds tolerance {self.tol:.3e}")


class StabilityViolation(NsacError):
    """Solution growth per step exceeded the configured bound."""


class CompatibilityDrift(NsacError):
    """Kernel component grew beyond tolerance before projection."""


class SingularForcing(NsacError):
    """Periodic forcing with nonzero mean (incompatible with periodicity)."""

    def __init__(self, mean):
        self.mean = tuple(float(m) for m in mean)
        super().__init__(f"force has nonzero mean {self.mean}")


class ClearanceViolation(NsacError):
    """Interface tube touches the domain boundary."""


class CurvatureBlowup(NsacError):
    """Curvature exceeded the configured bound."""


class ResolutionError(NsacError):
    """Grid spacing too coarse for the interface width."""


class MissingTrace(NsacError):
    """A required interface trace is absent."""


class SeamDiscontinuity(NsacError):
    """Glued fields mismatch in the blending region."""


class GridMismatch(NsacError):
    """Fields live on different grids."""


class InsufficientData(NsacError):
    """Not enough data rows for a fit."""


class NonPositiveError(NsacError):
    """Error values must be positive for a log-log fit."""
