"""
Structured error types shared across the package.

Every error derives from ``StegoError`` and from the builtin it specialises, so
``except ValueError`` keeps working for callers that don't know about us.
"""

from __future__ import annotations

from typing import Optional, Sequence


class StegoError(Exception):
    """Base class for all stego-leak errors."""


class ShapeError(StegoError, ValueError):
    """Raised when a tensor or image has the wrong dimensions."""

    def __init__(self, context: str, expected: Sequence[int] | str, actual: Sequence[int] | str):
        self.context = context
        self.expected = tuple(expected) if not isinstance(expected, str) else expected
        self.actual = tuple(actual) if not isinstance(actual, str) else actual
        super().__init__(f"{context}: expected {self.expected}, got {self.actual}")


class ConfigError(StegoError, ValueError):
    """Raised for invalid configuration values or unknown config keys."""


class SecretFormatError(StegoError, ValueError):
    """Raised when a secret image is not binary or carries no active bits."""


class SchemaError(StegoError, ValueError):
    """Raised when fitting a schema or encoding a record fails."""

    def __init__(self, message: str, attribute: Optional[str] = None, value: object = None):
        self.attribute = attribute
        self.value = value
        if attribute is not None:
            message = f"{attribute}: {message}"
        if value is not None:
            message = f"{message} ({value!r})"
        super().__init__(message)


class CapacityError(StegoError, ValueError):
    """Raised when a payload does not fit into the carrier."""

    def __init__(self, message: str, required: int, capacity: int):
        self.required = required
        self.capacity = capacity
        super().__init__(f"{message} (required {required}, capacity {capacity})")


class CsvFormatError(StegoError, ValueError):
    """Raised when a CSV row is malformed."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        prefix = f"line {line_number}: " if line_number is not None else ""
        super().__init__(prefix + message)


class ImageFormatError(StegoError, ValueError):
    """Raised for PNG flavours we don't read (16-bit, ...)."""


class CheckpointError(StegoError, ValueError):
    """Raised for corrupt, truncated or mismatched checkpoint files."""


class TrainingDivergedError(StegoError, RuntimeError):
    """Raised when the combined loss stops being finite."""

    def __init__(self, iteration: int, loss: float):
        self.iteration = iteration
        self.loss = loss
        super().__init__(f"non-finite combined loss {loss!r} at iteration {iteration}")
