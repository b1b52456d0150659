"""
Exceptions raised by cpkit
"""

from typing import Any, Dict, List, Optional, Sequence


class CpkitError(Exception):
    """Base exception for cpkit errors"""
    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        self.message = message
        self.context = context or {}
        super().__init__(self.message)


class InvalidArgumentError(CpkitError):
    """A value violates an operation precondition or a type invariant"""
    pass


class BehindCameraError(InvalidArgumentError):
    """Projection of a point that is not in front of the camera"""
    def __init__(self, message: str, z_forward_m: Optional[float] = None, **kwargs):
        self.z_forward_m = z_forward_m
        super().__init__(message, **kwargs)


class UnsortedStreamError(InvalidArgumentError):
    """Verdict stream is not sorted by time"""
    def __init__(self, message: str, index: Optional[int] = None, **kwargs):
        self.index = index
        super().__init__(message, **kwargs)


class MetricError(InvalidArgumentError):
    """Metric inputs cannot produce a defined value"""
    pass


class ConfigError(CpkitError):
    """Invalid, unknown or missing configuration"""
    def __init__(self, message: str, key: Optional[str] = None, **kwargs):
        self.key = key
        super().__init__(message, **kwargs)


class SchemaError(CpkitError):
    """Malformed record in a log file

    ``errors`` holds every problem found in the file; the message names the first.
    """
    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None,
                 field: Optional[str] = None, errors: Optional[List['SchemaError']] = None, **kwargs):
        self.path = path
        self.line = line
        self.field = field
        self.errors = errors if errors is not None else [self]
        super().__init__(message, **kwargs)

    def __str__(self) -> str:
        location = []
        if self.path:
            location.append(str(self.path))
        if self.line is not None:
            location.append(f"line {self.line}")
        if self.field:
            location.append(f"field '{self.field}'")
        prefix = ", ".join(location)
        text = f"{prefix}: {self.message}" if prefix else self.message
        if len(self.errors) > 1:
            text += f" (and {len(self.errors) - 1} more errors)"
        return text


class AlignmentError(CpkitError):
    """Clip ids of two inputs do not line up"""
    def __init__(self, message: str, missing: Sequence[str] = (), extra: Sequence[str] = (), **kwargs):
        self.missing = list(missing)
        self.extra = list(extra)
        super().__init__(message, **kwargs)

    def __str__(self) -> str:
        parts = [self.message]
        if self.missing:
            parts.append("missing: " + ", ".join(self.missing))
        if self.extra:
            parts.append("unexpected: " + ", ".join(self.extra))
        return "; ".join(parts)
