"""Shared exception types."""


class ConfigError(ValueError):
    """Invalid configuration or precondition violation caught before computing."""


class SpanError(ValueError):
    """A path/segment does not cover the requested time window."""


class NumericsError(RuntimeError):
    """Base class for runtime numerical failures."""


class BlowUpError(NumericsError):
    """Simulation produced a non-finite state."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class DivergenceError(NumericsError):
    """An improper integral has no finite value under the fitted decay."""


class RootCountError(NumericsError):
    """Contour root counting stayed unstable after retries."""
