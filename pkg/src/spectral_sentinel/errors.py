"""Exception hierarchy shared by the simulation, spectral and detection layers."""

from __future__ import annotations


class SentinelError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(SentinelError, ValueError):
    """Invalid parameters, schedules, windows or run configuration."""


class IntegrationError(SentinelError, ArithmeticError):
    """A dynamics function produced a non-finite derivative."""

    def __init__(self, message: str, component: int | None = None, time: float | None = None):
        super().__init__(message)
        self.component = component
        self.time = time


class SimulationDiverged(IntegrationError):
    """A state component left the admissible bound."""


class NumericError(SentinelError, ArithmeticError):
    """Eigen-solver or quadrature failure, or a non-positive variance."""


class RegimeError(SentinelError, ValueError):
    """Aspect ratio outside the (0, 1] regime of the spectral null."""


class DomainError(SentinelError, ValueError):
    """Test function evaluated outside its domain (e.g. log of a non-positive eigenvalue)."""


class ZeroVarianceError(SentinelError, ValueError):
    """A channel (row) has zero variance and cannot be standardized."""

    def __init__(self, message: str, channel: int | None = None, window: int | None = None):
        super().__init__(message)
        self.channel = channel
        self.window = window


class WindowSizeError(SentinelError, ValueError):
    """Series too short for the requested window."""


class ArityError(SentinelError, ValueError):
    """Wrong number of channels for an operation."""


class ParseError(SentinelError, ValueError):
    """Malformed CSV/JSON input; ``row`` is 1-based and counts the header."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


class StageError(SentinelError):
    """A pipeline stage failed; the original exception is the ``__cause__``."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
