"""Error handling utilities and decorators for the shell-rigidity toolkit.

This module provides standardized error handling patterns for numerical
stages and the mapping from exceptions to CLI exit codes.
"""

import sys
import time
import functools
from typing import Callable, Any, Optional, Dict

import numpy as np

from exceptions import (
    ShellRigidityError,
    ValidationError,
    ConfigurationError,
    GeometryError,
    MeshError,
    NumericalError,
    CheckFailure,
)
from logging_config import get_logger, get_run_id, log_stage

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


def handle_numerical_errors(stage: Optional[str] = None):
    """Decorator for numerical stages.

    Times the wrapped call, lets project exceptions through untouched and
    wraps linear-algebra and floating-point failures into ``NumericalError``.

    Args:
        stage: Name reported in logs and errors (defaults to the function name)
    """
    def decorator(func: Callable) -> Callable:
        stage_name = stage or func.__name__

        @functools.wraps(func)
        def wrapper(*args, **kwargs) -> Any:
            start_time = time.perf_counter()
            try:
                result = func(*args, **kwargs)
            except ShellRigidityError:
                raise
            except (np.linalg.LinAlgError, FloatingPointError, ArithmeticError, RuntimeError) as e:
                logger.error(
                    f"Numerical stage '{stage_name}' failed",
                    extra={'stage': stage_name, 'error': str(e), 'error_type': type(e).__name__}
                )
                raise NumericalError(str(e), stage=stage_name) from e
            log_stage(stage_name, kwargs, time.perf_counter() - start_time)
            return result

        return wrapper
    return decorator


def exit_code_for(error: Optional[BaseException]) -> int:
    """Map an exception (or its absence) to the CLI exit code."""
    if error is None:
        return EXIT_OK
    if isinstance(error, CheckFailure):
        return EXIT_CHECK_FAILED
    if isinstance(error, (ValidationError, ConfigurationError, GeometryError)):
        return EXIT_USAGE
    return EXIT_NUMERICAL


_HINTS = {
    ValidationError: "Check the command-line flags and configuration values.",
    ConfigurationError: "Check the TOML configuration file; flags override file values.",
    GeometryError: "Check the preset parameters and the thickness against the focal distance.",
    MeshError: "Refine the mesh or reduce the thickness.",
    NumericalError: "Loosen the tolerance, raise max_iter, or inspect report.txt diagnostics.",
    CheckFailure: "See the CSV output for the failing rows.",
}


def _hint_for(error: Exception) -> str:
    for cls in type(error).__mro__:
        if cls in _HINTS:
            return _HINTS[cls]
    return "Unexpected failure; rerun with LOG_LEVEL=DEBUG."


def report_error(error: Exception, context: str = "", stream=None) -> int:
    """Print a one-line error plus a hint and return the exit code.

    Args:
        error: The exception that occurred
        context: Subcommand or stage in which it occurred
        stream: Output stream (defaults to stderr)
    """
    stream = stream or sys.stderr
    prefix = f"[{context}] " if context else ""
    print(f"{prefix}{error}", file=stream)
    print(f"  hint: {_hint_for(error)}", file=stream)
    return exit_code_for(error)


def error_summary(error: Exception) -> Dict[str, Any]:
    """Create a standardized error dictionary for reports and logs."""
    summary = {
        "type": type(error).__name__,
        "message": str(error),
        "exit_code": exit_code_for(error),
        "run_id": get_run_id(),
    }

    for attr in ("field_name", "config_key", "preset", "stage", "check_name",
                 "iterations", "residual", "max_curvature", "kind"):
        value = getattr(error, attr, None)
        if value is not None:
            summary[attr] = value

    return summary


class ErrorHandler:
    """Context manager that converts exceptions into CLI exit codes."""

    def __init__(self, context: str = "", stream=None):
        self.context = context
        self.stream = stream
        self.error = None
        self.exit_code = EXIT_OK

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        if exc_type is None:
            return False
        if not issubclass(exc_type, Exception):
            return False

        self.error = exc_value
        if isinstance(exc_value, ShellRigidityError):
            logger.error(f"Error in {self.context}", extra={'error': error_summary(exc_value)})
        else:
            logger.exception(f"Unexpected error in {self.context}")
        self.exit_code = report_error(exc_value, self.context, self.stream)
        return True
