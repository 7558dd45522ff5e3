"""Exception hierarchy shared across the pipeline.

CLI exit-code mapping: InputError family -> 1, ConfigError -> 2,
StageError -> 3.
"""

from __future__ import annotations


class AnnogateError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(AnnogateError):
    """Invalid or missing configuration (schemas, endpoints, credentials)."""


class InputError(AnnogateError):
    """Invalid data or arguments supplied to an operation."""


class IngestError(InputError):
    """Raw input could not be decoded or violates the documented format."""


class UsageError(InputError):
    """An operation was called with inconsistent or out-of-contract inputs."""


class UndefinedMetricError(InputError):
    """A rate was requested with a zero denominator."""


class MissingDecisionsError(InputError):
    """Decisions are required for tasks that have none yet."""

    def __init__(self, keys, message: str | None = None):
        self.keys = tuple(keys)
        shown = ", ".join(str(k) for k in self.keys[:10])
        if len(self.keys) > 10:
            shown += f", ... ({len(self.keys)} total)"
        super().__init__(message or f"unresolved tasks for keys: {shown}")


class IncompleteExportError(InputError):
    """Gold export refused because required records are missing."""

    def __init__(self, missing_keys, message: str | None = None):
        self.missing_keys = tuple(missing_keys)
        shown = ", ".join(str(k) for k in self.missing_keys[:10])
        if len(self.missing_keys) > 10:
            shown += f", ... ({len(self.missing_keys)} total)"
        super().__init__(message or f"export incomplete, missing: {shown}")


class StageError(AnnogateError):
    """A pipeline stage was invoked before its prerequisites completed."""


class NotFoundError(AnnogateError):
    """A referenced entity (task, column, image) does not exist."""
