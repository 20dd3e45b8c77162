"""Exception types shared across the engine.

The CLI maps these onto its exit-code contract: config problems exit 2,
SUT/protocol problems exit 3, incomplete prerequisites exit 4.
"""

from __future__ import annotations


class ExaminerError(Exception):
    """Base class for all engine errors."""


class ConfigError(ExaminerError):
    """Invalid or inconsistent configuration (missing files, bad values)."""


class DimensionMismatch(ExaminerError, ValueError):
    """Vector length does not match the declared space or decoder."""


class ProtocolError(ExaminerError):
    """External SUT failed: spawn, handshake, timeout, malformed reply, or exit.

    ``batch_id`` identifies the in-flight request when one was pending.
    """

    def __init__(self, message: str, batch_id: int | None = None):
        super().__init__(message)
        self.batch_id = batch_id


class SampleRejection(ExaminerError):
    """Validity rejection budget exhausted while drawing poses."""


class UndefinedMetric(ExaminerError):
    """A metric was requested on inputs for which it has no defined value."""


class IncompleteRun(ExaminerError):
    """A command needs an earlier phase that has not completed in this run dir."""
