"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, OSError -> 3,
InvariantError -> 4.
"""


class ScanetError(Exception):
    """Base class for all package errors."""


class ConfigError(ScanetError):
    """Invalid configuration or incompatible inputs (usage-level error)."""


class InputError(ScanetError, ValueError):
    """An operation received arguments violating its contract."""


class DataError(InputError):
    """Stored or supplied data is inconsistent (bad indices, bad labels)."""


class InvariantError(ScanetError):
    """An internal invariant failed; indicates a bug or corrupted state."""


class GenerationError(ScanetError):
    """Procedural manual generation could not find a valid placement."""

    def __init__(self, message: str, retries: int = 0):
        super().__init__(message)
        self.retries = retries


class SplitError(ConfigError):
    """Dataset too small to produce the requested splits."""


class CheckpointError(ScanetError):
    """Checkpoint file unreadable or from an incompatible version."""
