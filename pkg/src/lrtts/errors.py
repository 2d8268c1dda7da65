"""Exception types shared across the package."""


class LrttsError(Exception):
    """Base class for all package errors."""


class ManifestError(LrttsError):
    """Malformed manifest line or duplicate utterance id."""


class AlignmentError(LrttsError):
    """Alignment file inconsistent with its manifest entry."""


class ValidationError(LrttsError):
    """A record or input violates a structural invariant."""


class CheckpointError(LrttsError):
    """Missing, corrupt, or config-incompatible checkpoint."""


class ConfigError(LrttsError):
    """Invalid configuration or stage plan."""
