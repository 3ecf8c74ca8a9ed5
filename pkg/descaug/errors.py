"""
Error handling for descaug.

Every failure the toolkit can report is an AppError tagged with an ErrorType.
Measurement code raises; batch code collects errors as Results so one bad
entry never stops a run.
"""

import traceback
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Generic, Optional, TypeVar, Union

T = TypeVar('T')
E = TypeVar('E')


class ErrorType(Enum):
    """Types of errors that can occur in the toolkit."""
    DECODE_ERROR = "decode_error"
    UNSUPPORTED_FORMAT = "unsupported_format"
    INVALID_INPUT = "invalid_input"
    INVALID_PARAMETER = "invalid_parameter"
    TOO_SHORT = "too_short"
    BELOW_GATE = "below_gate"
    UNVOICED = "unvoiced"
    UNDEFINED_CENTROID = "undefined_centroid"
    NO_DECAY = "no_decay"
    PARSE_ERROR = "parse_error"
    UNKNOWN_DESCRIPTOR = "unknown_descriptor"
    DUPLICATE_DESCRIPTOR = "duplicate_descriptor"
    INVALID_RECORD = "invalid_record"
    MANIFEST_ERROR = "manifest_error"
    CONFIG_ERROR = "config_error"
    IO_ERROR = "io_error"
    UNKNOWN = "unknown"


# Errors that mean "this descriptor is undefined for this clip" rather than
# "something is broken".
MEASUREMENT_UNDEFINED = frozenset({
    ErrorType.TOO_SHORT,
    ErrorType.BELOW_GATE,
    ErrorType.UNVOICED,
    ErrorType.UNDEFINED_CENTROID,
    ErrorType.NO_DECAY,
})


@dataclass
class ErrorContext:
    """Additional context for errors."""
    file_path: Optional[str] = None
    operation: Optional[str] = None
    details: Optional[dict] = None


class AppError(Exception):
    """Base toolkit error with context and chaining support."""

    def __init__(self,
                 message: str,
                 error_type: ErrorType = ErrorType.UNKNOWN,
                 context: Optional[ErrorContext] = None,
                 source: Optional[Exception] = None):
        super().__init__(message)
        self.message = message
        self.error_type = error_type
        self.context = context or ErrorContext()
        self.source = source
        self.traceback_str = traceback.format_exc() if source else None

    def with_context(self, **kwargs) -> 'AppError':
        """Add context to the error."""
        if self.context is None:
            self.context = ErrorContext()

        for key, value in kwargs.items():
            if hasattr(self.context, key):
                setattr(self.context, key, value)
            else:
                if self.context.details is None:
                    self.context.details = {}
                self.context.details[key] = value

        return self

    @property
    def is_undefined_measurement(self) -> bool:
        return self.error_type in MEASUREMENT_UNDEFINED

    def to_dict(self) -> dict:
        """Plain-JSON form used in run reports and HTTP responses."""
        out = {"error_type": self.error_type.value, "message": self.message}
        if self.context and self.context.details:
            out["details"] = dict(self.context.details)
        return out

    def __str__(self) -> str:
        parts = [f"[{self.error_type.value}] {self.message}"]

        if self.context:
            if self.context.file_path:
                parts.append(f"File: {self.context.file_path}")
            if self.context.operation:
                parts.append(f"Operation: {self.context.operation}")
            if self.context.details:
                for key, value in self.context.details.items():
                    parts.append(f"{key}: {value}")

        if self.source:
            parts.append(f"Caused by: {self.source}")

        return " | ".join(parts)


class Result(Generic[T, E]):
    """Result type similar to Rust's Result<T, E>."""

    def __init__(self, value: Union[T, E], is_ok: bool):
        self._value = value
        self._is_ok = is_ok

    @classmethod
    def ok(cls, value: T) -> 'Result[T, E]':
        return cls(value, True)

    @classmethod
    def err(cls, error: E) -> 'Result[T, E]':
        return cls(error, False)

    def is_ok(self) -> bool:
        return self._is_ok

    def is_err(self) -> bool:
        return not self._is_ok

    @property
    def error(self) -> Optional[E]:
        return None if self._is_ok else self._value

    def and_then(self, func: Callable[[T], 'Result']) -> 'Result':
        """Chain operations that return Results."""
        if not self._is_ok:
            return Result.err(self._value)
        try:
            return func(self._value)
        except AppError as e:
            return Result.err(e)
        except Exception as e:
            return Result.err(AppError(f"And then operation failed: {e}", source=e))


AppResult = Result[T, AppError]


def wrap_result(func: Callable[..., T]) -> Callable[..., AppResult[T]]:
    """Decorator to wrap functions to return Results."""
    def wrapper(*args, **kwargs) -> AppResult[T]:
        try:
            return Result.ok(func(*args, **kwargs))
        except AppError as e:
            return Result.err(e)
        except FileNotFoundError as e:
            return Result.err(AppError(f"File not found: {e}", ErrorType.IO_ERROR, source=e))
        except PermissionError as e:
            return Result.err(AppError(f"Permission denied: {e}", ErrorType.IO_ERROR, source=e))
        except Exception as e:
            return Result.err(AppError(f"Unexpected error: {e}", ErrorType.UNKNOWN, source=e))

    wrapper.__name__ = getattr(func, "__name__", "wrapped")
    wrapper.__doc__ = func.__doc__
    return wrapper


def ensure(condition: bool, message: str, error_type: ErrorType = ErrorType.INVALID_INPUT, **details) -> None:
    """Raise an AppError of the given type unless condition holds."""
    if not condition:
        raise AppError(message, error_type, ErrorContext(details=details or None))


# Utility constructors for common error scenarios

def decode_error(message: str, offset: Optional[int] = None, source: Optional[Exception] = None) -> AppError:
    details = {"offset": offset} if offset is not None else None
    return AppError(f"WAV decode failed: {message}", ErrorType.DECODE_ERROR,
                    ErrorContext(operation="decode_wav", details=details), source)


def unsupported_format_error(fmt: str) -> AppError:
    return AppError(f"Unsupported WAV encoding: {fmt}", ErrorType.UNSUPPORTED_FORMAT,
                    ErrorContext(operation="decode_wav", details={"format": fmt}))


def too_short_error(operation: str, needed: float, got: float, unit: str = "s") -> AppError:
    return AppError(f"Signal too short for {operation}: need {needed:g}{unit}, got {got:g}{unit}",
                    ErrorType.TOO_SHORT,
                    ErrorContext(operation=operation, details={"needed": needed, "got": got}))


def parse_error(message: str, offset: int) -> AppError:
    return AppError(f"{message} at byte {offset}", ErrorType.PARSE_ERROR,
                    ErrorContext(operation="parse_caption", details={"offset": offset}))


def manifest_error(path: str, line: int, message: str, source: Optional[Exception] = None) -> AppError:
    return AppError(f"line {line}: {message}", ErrorType.MANIFEST_ERROR,
                    ErrorContext(file_path=path, operation="load_manifest", details={"line": line}),
                    source)


def io_error(path: str, operation: str, source: Exception) -> AppError:
    return AppError(f"File operation failed: {source}", ErrorType.IO_ERROR,
                    ErrorContext(file_path=path, operation=operation), source)
