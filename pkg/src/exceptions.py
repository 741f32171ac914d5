"""Custom exceptions for the shell-rigidity toolkit.

This module defines domain-specific exceptions that carry the context needed
to report a failure (which field, which preset, which solver stage) and that
the CLI maps to its exit codes.
"""


class ShellRigidityError(Exception):
    """Base exception for all shell-rigidity operations."""
    pass


class ValidationError(ShellRigidityError):
    """Exception for input and precondition validation failures."""

    def __init__(self, message, field_name=None, invalid_value=None):
        super().__init__(message)
        self.field_name = field_name
        self.invalid_value = invalid_value

    def __str__(self):
        base_msg = super().__str__()
        if self.field_name:
            return f"Validation Error in '{self.field_name}': {base_msg}"
        return f"Validation Error: {base_msg}"


class ConfigurationError(ShellRigidityError):
    """Exception for configuration loading and validation failures."""

    def __init__(self, message, config_file=None, config_key=None):
        super().__init__(message)
        self.config_file = config_file
        self.config_key = config_key

    def __str__(self):
        base_msg = super().__str__()
        if self.config_file and self.config_key:
            return f"Configuration Error in '{self.config_file}' [{self.config_key}]: {base_msg}"
        if self.config_file:
            return f"Configuration Error in '{self.config_file}': {base_msg}"
        if self.config_key:
            return f"Configuration Error [{self.config_key}]: {base_msg}"
        return f"Configuration Error: {base_msg}"


class GeometryError(ShellRigidityError):
    """Exception for surfaces that cannot be built as requested."""

    def __init__(self, message, preset=None):
        super().__init__(message)
        self.preset = preset

    def __str__(self):
        base_msg = super().__str__()
        if self.preset:
            return f"Geometry Error for '{self.preset}': {base_msg}"
        return f"Geometry Error: {base_msg}"


class FocalBoundError(GeometryError):
    """Exception for shells thicker than the focal distance allows."""

    def __init__(self, message, max_curvature=None, thickness=None, preset=None):
        super().__init__(message, preset=preset)
        self.max_curvature = max_curvature
        self.thickness = thickness

    def __str__(self):
        base_msg = super().__str__()
        if self.max_curvature is not None:
            return f"{base_msg} (max principal curvature {self.max_curvature:.6g}, h={self.thickness})"
        return base_msg


class MeshError(ShellRigidityError):
    """Exception for degenerate shell meshes (non-positive Jacobians, bad lattices)."""

    def __init__(self, message, element=None):
        super().__init__(message)
        self.element = element

    def __str__(self):
        base_msg = super().__str__()
        if self.element is not None:
            return f"Mesh Error at element {self.element}: {base_msg}"
        return f"Mesh Error: {base_msg}"


class NumericalError(ShellRigidityError):
    """Exception for failures of a numerical stage (factorisation, solve, iteration)."""

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage

    def __str__(self):
        base_msg = super().__str__()
        if self.stage:
            return f"Numerical Error in '{self.stage}': {base_msg}"
        return f"Numerical Error: {base_msg}"


class LinearSolveError(NumericalError):
    """Exception for singular discretisations in a sparse linear solve."""
    pass


class EigensolverError(NumericalError):
    """Exception for eigensolver breakdowns and invalid pencils."""

    def __init__(self, message, iterations=None, residual=None, stage="eigensolve"):
        super().__init__(message, stage=stage)
        self.iterations = iterations
        self.residual = residual

    def __str__(self):
        base_msg = super().__str__()
        if self.iterations is not None:
            return f"{base_msg} (after {self.iterations} iterations, residual {self.residual})"
        return base_msg


class DegenerateSampleError(ShellRigidityError):
    """Exception for ratio monitors whose denominator vanishes.

    ``kind`` is ``"degenerate"`` for 0/0 samples and ``"counterexample"`` when
    the numerator is non-zero, which would falsify the implementation.
    """

    def __init__(self, message, kind="degenerate", numerator=None):
        super().__init__(message)
        self.kind = kind
        self.numerator = numerator

    def __str__(self):
        base_msg = super().__str__()
        return f"Degenerate Sample ({self.kind}): {base_msg}"


class CheckFailure(ShellRigidityError):
    """Exception for a verification check that ran but did not pass."""

    def __init__(self, message, check_name=None):
        super().__init__(message)
        self.check_name = check_name

    def __str__(self):
        base_msg = super().__str__()
        if self.check_name:
            return f"Check Failed ({self.check_name}): {base_msg}"
        return f"Check Failed: {base_msg}"
