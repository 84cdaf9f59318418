"""Shared exception hierarchy.

Every failure a caller can reasonably handle derives from QnavError so the
CLI can map domain errors to exit code 1 while argparse keeps exit code 2
for usage problems.
"""


class QnavError(Exception):
    """Base class for all domain errors raised by this package."""


class ConfigError(QnavError):
    """Invalid configuration value, schema violation, or unknown key."""


class StateError(QnavError):
    """Operation called in an invalid order (e.g. backward before forward)."""


class NumericError(QnavError):
    """Non-finite values or numerically impossible requests."""


class BoundsError(QnavError):
    """Query outside the valid spatial or index domain."""


class InputError(QnavError):
    """Malformed input data (files, datasets, shapes)."""


class DegenerateMotionError(QnavError):
    """Motion with contradictory geometry (e.g. elevation change without displacement)."""
