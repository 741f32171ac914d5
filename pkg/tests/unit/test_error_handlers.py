import pytest
import sys
import os
import io

import numpy as np

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..', 'src'))

from error_handlers import (
    EXIT_OK,
    EXIT_CHECK_FAILED,
    EXIT_USAGE,
    EXIT_NUMERICAL,
    ErrorHandler,
    error_summary,
    exit_code_for,
    handle_numerical_errors,
    report_error,
)
from exceptions import (
    CheckFailure,
    ConfigurationError,
    EigensolverError,
    FocalBoundError,
    MeshError,
    NumericalError,
    ValidationError,
)
from logging_config import set_run_id


class TestHandleNumericalErrors:
    """Test cases for the numerical-stage decorator."""

    def test_returns_result(self):
        """A successful call passes its result through."""
        @handle_numerical_errors(stage="square")
        def square(x):
            return x * x

        assert square(3) == 9

    def test_wraps_linalg_error(self):
        """LinAlgError becomes a NumericalError with the stage name."""
        @handle_numerical_errors(stage="factor")
        def factor():
            raise np.linalg.LinAlgError("singular matrix")

        with pytest.raises(NumericalError) as excinfo:
            factor()
        assert excinfo.value.stage == 'factor'
        assert "singular matrix" in str(excinfo.value)

    def test_wraps_runtime_error(self):
        """scipy factorisation RuntimeErrors are wrapped too."""
        @handle_numerical_errors()
        def spilu_like():
            raise RuntimeError("Factor is exactly singular")

        with pytest.raises(NumericalError) as excinfo:
            spilu_like()
        assert excinfo.value.stage == 'spilu_like'

    def test_project_errors_pass_through(self):
        """Project exceptions are re-raised unchanged."""
        @handle_numerical_errors(stage="mesh")
        def mesh():
            raise FocalBoundError("too thick", max_curvature=3.0, thickness=0.6)

        with pytest.raises(FocalBoundError):
            mesh()

    def test_other_errors_are_not_wrapped(self):
        """Programming errors are not disguised as numerical failures."""
        @handle_numerical_errors(stage="bug")
        def bug():
            raise KeyError("missing")

        with pytest.raises(KeyError):
            bug()


class TestExitCodes:
    """Test cases for the exception-to-exit-code mapping."""

    @pytest.mark.parametrize("error, code", [
        (None, EXIT_OK),
        (CheckFailure("x"), EXIT_CHECK_FAILED),
        (ValidationError("x"), EXIT_USAGE),
        (ConfigurationError("x"), EXIT_USAGE),
        (FocalBoundError("x"), EXIT_USAGE),
        (NumericalError("x"), EXIT_NUMERICAL),
        (EigensolverError("x"), EXIT_NUMERICAL),
        (MeshError("x"), EXIT_NUMERICAL),
        (ZeroDivisionError("x"), EXIT_NUMERICAL),
    ])
    def test_exit_code_for(self, error, code):
        """Each error class maps to its documented exit code."""
        assert exit_code_for(error) == code

    def test_report_error_prints_hint(self):
        """report_error writes the message and a hint line."""
        stream = io.StringIO()
        code = report_error(ValidationError("need ≥ 2 grids", field_name='grids'), "identities", stream)
        lines = stream.getvalue().splitlines()
        assert code == EXIT_USAGE
        assert lines[0].startswith("[identities] Validation Error in 'grids'")
        assert lines[1].startswith("  hint:")


class TestErrorSummary:
    """Test cases for structured error summaries."""

    def test_summary_fields(self):
        """Summaries include type, exit code, run id and set attributes."""
        set_run_id('abcd1234')
        summary = error_summary(EigensolverError("stalled", iterations=10, residual=1e-3))
        assert summary['type'] == 'EigensolverError'
        assert summary['exit_code'] == EXIT_NUMERICAL
        assert summary['run_id'] == 'abcd1234'
        assert summary['iterations'] == 10
        assert summary['stage'] == 'eigensolve'

    def test_summary_omits_unset_attributes(self):
        """Attributes left as None are not reported."""
        summary = error_summary(ValidationError("bad"))
        assert 'field_name' not in summary


class TestErrorHandler:
    """Test cases for the CLI error context manager."""

    def test_no_error(self):
        """A clean block leaves exit code 0."""
        with ErrorHandler("demo", stream=io.StringIO()) as handler:
            pass
        assert handler.exit_code == EXIT_OK
        assert handler.error is None

    def test_records_error(self):
        """Exceptions are suppressed and mapped to an exit code."""
        stream = io.StringIO()
        with ErrorHandler("demo", stream=stream) as handler:
            raise CheckFailure("failed", check_name='curvature')
        assert handler.exit_code == EXIT_CHECK_FAILED
        assert isinstance(handler.error, CheckFailure)
        assert "curvature" in stream.getvalue()

    def test_keyboard_interrupt_propagates(self):
        """Non-Exception signals are not swallowed."""
        with pytest.raises(KeyboardInterrupt):
            with ErrorHandler("demo", stream=io.StringIO()):
                raise KeyboardInterrupt()
