import pytest
import sys
import os

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..', 'src'))

from exceptions import (
    ShellRigidityError,
    ValidationError,
    ConfigurationError,
    GeometryError,
    FocalBoundError,
    MeshError,
    NumericalError,
    LinearSolveError,
    EigensolverError,
    DegenerateSampleError,
    CheckFailure,
)


class TestExceptionHierarchy:
    """Test cases for the exception class tree."""

    @pytest.mark.parametrize("cls", [
        ValidationError, ConfigurationError, GeometryError, FocalBoundError, MeshError,
        NumericalError, LinearSolveError, EigensolverError, DegenerateSampleError, CheckFailure,
    ])
    def test_all_derive_from_base(self, cls):
        """Every project exception is a ShellRigidityError."""
        assert issubclass(cls, ShellRigidityError)

    def test_focal_bound_is_geometry_error(self):
        """Focal-bound violations are geometry errors."""
        assert issubclass(FocalBoundError, GeometryError)

    def test_solver_errors_are_numerical(self):
        """Linear-solve and eigensolver failures are numerical errors."""
        assert issubclass(LinearSolveError, NumericalError)
        assert issubclass(EigensolverError, NumericalError)


class TestExceptionMessages:
    """Test cases for exception context and formatting."""

    def test_validation_error_with_field(self):
        """ValidationError names the offending field."""
        error = ValidationError("must be positive", field_name='b0', invalid_value=-1)
        assert str(error) == "Validation Error in 'b0': must be positive"
        assert error.invalid_value == -1

    def test_validation_error_without_field(self):
        """ValidationError without a field keeps a plain prefix."""
        assert str(ValidationError("bad")) == "Validation Error: bad"

    def test_configuration_error_with_file_and_key(self):
        """ConfigurationError shows both file and key."""
        error = ConfigurationError("Unknown key", config_file='run.toml', config_key='surface.foo')
        assert str(error) == "Configuration Error in 'run.toml' [surface.foo]: Unknown key"

    def test_configuration_error_key_only(self):
        """ConfigurationError with only a key."""
        error = ConfigurationError("Unknown preset", config_key='surface.preset')
        assert str(error) == "Configuration Error [surface.preset]: Unknown preset"

    def test_focal_bound_error_reports_curvature(self):
        """FocalBoundError carries the offending curvature and thickness."""
        error = FocalBoundError("too thick", max_curvature=2.5, thickness=0.7, preset='cylinder')
        text = str(error)
        assert "Geometry Error for 'cylinder'" in text
        assert "max principal curvature 2.5" in text
        assert "h=0.7" in text

    def test_mesh_error_element(self):
        """MeshError names the element."""
        assert str(MeshError("flat", element=12)) == "Mesh Error at element 12: flat"

    def test_eigensolver_error_iterations(self):
        """EigensolverError defaults its stage and reports iterations."""
        error = EigensolverError("breakdown", iterations=7, residual=0.5)
        assert error.stage == 'eigensolve'
        assert "after 7 iterations" in str(error)

    def test_degenerate_sample_kind(self):
        """DegenerateSampleError distinguishes 0/0 from a counterexample."""
        error = DegenerateSampleError("denominator vanishes", kind='counterexample', numerator=1.0)
        assert error.kind == 'counterexample'
        assert str(error).startswith("Degenerate Sample (counterexample)")

    def test_check_failure_name(self):
        """CheckFailure names the failing check."""
        error = CheckFailure("identity failed", check_name='metric_compatibility')
        assert str(error) == "Check Failed (metric_compatibility): identity failed"
