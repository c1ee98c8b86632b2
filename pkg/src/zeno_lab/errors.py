"""Exception and warning types shared across the package."""


class ZenoLabError(Exception):
    """Base class for all package-specific errors."""


class InvalidParameterError(ZenoLabError, ValueError):
    """A physical or grid parameter violates its documented constraints."""


class UsageError(ZenoLabError, ValueError):
    """An operation was called with inconsistent or missing inputs."""


class AnalysisError(ZenoLabError, ValueError):
    """Post-processing received data it cannot interpret (e.g. non-unimodal spectrum)."""


class NumericalBlowupError(ZenoLabError, RuntimeError):
    """The integrator produced a non-finite state.

    Carries the first time at which the state went non-finite.
    """

    def __init__(self, t: float, message: str | None = None):
        self.t = float(t)
        super().__init__(message or f"non-finite state encountered at t={t:g}")


class LadderLeakError(ZenoLabError, RuntimeError):
    """Probability mass reached the top of the count ladder; n_max is too small."""


class ConfigError(ZenoLabError, ValueError):
    """A scenario configuration file could not be parsed or validated."""


class TruncationWarning(UserWarning):
    """The energy window is too narrow for the requested run."""


class LargeBiasWarning(UserWarning):
    """The detector bias is not comfortably in the large-bias regime."""


class AsymptoteWarning(UserWarning):
    """A trajectory was used as asymptotic although the dot is not yet empty."""


class RecurrenceWarning(UserWarning):
    """Requested times exceed the recurrence horizon of the discretized continuum."""
