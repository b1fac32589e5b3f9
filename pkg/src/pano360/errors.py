"""Exception hierarchy shared across the toolkit.

All data-level failures derive from DataError so the CLI can map them to a
single exit code; backend/bridge failures are kept separate.
"""


class Pano360Error(Exception):
    """Base class for all toolkit errors."""


class DataError(Pano360Error):
    """Invalid, inconsistent or unreadable input data."""


class DegenerateMapError(DataError):
    """A map whose statistics collapse (constant values, zero spread)."""


class InsufficientDataError(DataError):
    """Fewer valid pixels than an operation needs."""


class BridgeError(Pano360Error):
    """Teacher bridge unreachable or misbehaving."""
