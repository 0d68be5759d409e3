# structure_tracker/errors.py
"""
Exception hierarchy shared by every module.
The CLI maps these onto exit codes (I/O -> 2, data -> 3).
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional


class TrackerError(Exception):
    """Base class for all tracker errors."""


class TrackerIOError(TrackerError):
    """A file could not be read or written."""

    def __init__(self, path: Path | str, reason: str):
        self.path = Path(path)
        self.reason = reason
        super().__init__(f"{self.path}: {reason}")


class DataError(TrackerError):
    """Input data or configuration is invalid."""


class ParseError(DataError):
    """A line of a MOTChallenge CSV file could not be parsed."""

    def __init__(self, path: Path | str, line_no: int, field: str, value: str, reason: str = "invalid value"):
        self.path = Path(path)
        self.line_no = line_no
        self.field = field
        self.value = value
        super().__init__(f"{self.path}:{line_no}: field '{field}' = {value!r}: {reason}")


class ConfigError(DataError):
    """A configuration key or value is invalid."""


class FrameOrderError(DataError):
    """Frames were handed to the tracker out of order."""

    def __init__(self, expected: int, got: int):
        self.expected = expected
        self.got = got
        super().__init__(f"frames must be processed in order: expected frame {expected}, got {got}")


class NotEvaluableError(DataError):
    """Ground truth contains no considered boxes."""


class CardinalityError(TrackerError, ValueError):
    """Fixed-pair global assignment needs equal detection and target counts."""

    def __init__(self, detections: int, targets: int):
        self.detections = detections
        self.targets = targets
        super().__init__(
            f"global structural assignment needs equal counts (got {detections} detections, "
            f"{targets} targets); use heuristic_search for unequal frames"
        )


class InstanceTooLargeError(TrackerError, ValueError):
    """Brute-force enumeration refused for an oversized instance."""


class AppearanceUnavailable(TrackerError):
    """No pixels available for an appearance descriptor. Callers fall back to motion only."""

    def __init__(self, reason: str, path: Optional[Path] = None):
        self.path = path
        super().__init__(reason if path is None else f"{path}: {reason}")
