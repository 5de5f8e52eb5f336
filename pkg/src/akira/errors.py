"""Exception types shared across the repair loop."""

from __future__ import annotations


class AkiraError(Exception):
    """Base class for all errors raised by this package."""


class EmptyProgramError(AkiraError):
    """A session was started on empty input."""


class DuplicateSnapshotError(AkiraError):
    """A snapshot id was checkpointed twice."""


class UnknownSnapshotError(AkiraError):
    """A restore targeted a snapshot id that is not in the store."""


class DetectorUnavailableError(AkiraError):
    """The detection backend failed, timed out, or ran out of script."""


class ProviderUnavailableError(AkiraError):
    """The generation backend failed, timed out, or ran out of script."""


class DegenerateCandidateError(AkiraError):
    """The provider returned output no repair can be built from."""


class ScriptError(AkiraError):
    """A mock script or mapping file could not be loaded."""


class ConfigError(AkiraError):
    """A configuration value is missing, malformed, or out of range."""
