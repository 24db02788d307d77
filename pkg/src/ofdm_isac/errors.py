"""Exception types shared across the simulator."""


class SimulationError(Exception):
    """Base class for all simulator errors."""


class ConfigError(SimulationError):
    """Invalid or malformed configuration. Carries the offending key when known."""

    def __init__(self, message, key=None):
        super().__init__(message if key is None else f"{message} (key: {key})")
        self.key = key


class SyncError(SimulationError):
    """Synchronization chain failure (preamble not found, ridge lost, ...)."""


class DecodeError(SimulationError):
    """Channel decoding failed hard (length mismatch etc., not parity failure)."""
