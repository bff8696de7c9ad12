"""Exception types shared across the package."""

from __future__ import annotations


class ThomlabError(Exception):
    """Base class for all package-specific failures."""


class DimensionMismatch(ThomlabError, ValueError):
    pass


class BlowUp(ThomlabError):
    """Trajectory left the validity region; carries the partial run."""

    def __init__(self, message: str, t_event: float | None = None,
                 trajectory=None):
        super().__init__(message)
        self.t_event = t_event
        self.trajectory = trajectory


class StiffnessFailure(ThomlabError):
    """Adaptive step control underflowed before reaching the horizon."""


class ExponentialTail(ThomlabError):
    """Norm decay is exponential; power-law rate extraction does not apply."""


class InsufficientWindow(ThomlabError):
    """Not enough resolved decades (or no stable fit) in the tail window."""


# alias: envelope checks phrase the same failure as a missing tail
RequiresTail = InsufficientWindow


class NonConvergentSecant(ThomlabError):
    """Secant direction keeps oscillating; carries the observed amplitude."""

    def __init__(self, message: str, amplitude: float = float("nan")):
        super().__init__(message)
        self.amplitude = amplitude


class EmptyRegion(ThomlabError):
    """No sampled point satisfied the region membership predicate."""


class NoConvergence(ThomlabError):
    pass


class SingularJacobian(ThomlabError):
    pass


class DegenerateFit(ThomlabError):
    """Ill-conditioned least-squares system in the polynomial fit."""


class UnstableModeExcited(ThomlabError):
    """The linearly unstable constant mode grew past its abort threshold."""

    def __init__(self, message: str, t: float | None = None, series=None):
        super().__init__(message)
        self.t = t
        self.series = series


class ConfigError(ThomlabError):
    pass
