"""Exception types shared across the package.

Two broad families: configuration problems (bad parameters, malformed
schedules, unreadable config files) and numerical problems (series that
stop converging, truncation overflow, conditioning on events of vanishing
probability). The CLI maps these onto distinct exit codes.
"""

from __future__ import annotations


class PhononHeraldError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(PhononHeraldError):
    """Invalid parameter values or an unparseable configuration."""


class InvalidScheduleError(ConfigError):
    """A pulse schedule that cannot be run (empty, bad durations, ...)."""


class NumericalError(PhononHeraldError):
    """Base class for runtime numerical failures."""


class ThresholdSeriesDiverged(NumericalError):
    """The threshold-detector series has no finite sum for these parameters."""


class ConditioningError(NumericalError):
    """Conditioning on a herald event whose probability is numerically zero."""


class CoherenceNotResolved(NumericalError):
    """A decay-time estimate was requested on a grid that never crosses 1/e."""


class TruncationError(NumericalError):
    """Fock-space truncation leaked more population than the tolerance allows."""
