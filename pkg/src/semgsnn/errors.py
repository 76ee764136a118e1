"""Exception hierarchy shared by all pipeline stages."""


class SemgError(Exception):
    """Base class for errors raised by this package."""

    exit_code = 1


class ConfigError(SemgError, ValueError):
    """A configuration value violates its invariants."""


class InputError(SemgError, ValueError):
    """Input data is outside the domain an operation accepts."""


class ShapeError(InputError):
    """Array dimensions do not match."""


class CalibrationError(SemgError, ValueError):
    """Calibration data is empty or degenerate."""


class StateError(SemgError, RuntimeError):
    """An operation was called before its required state exists."""

    exit_code = 3


class VersionError(StateError):
    """A file declares a format version this build cannot read."""


class DegenerateCalibrationWarning(UserWarning):
    """Threshold search exhausted the normalized range without meeting the rate cap."""
