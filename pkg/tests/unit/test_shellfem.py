import pytest
import sys
import os
import math

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..', 'src'))

from eigensolve import smallest_eig
from exceptions import FocalBoundError, ValidationError
from shellfem import (
    assemble_forms,
    build_shell_mesh,
    discrete_volume,
    exact_volume,
    export_coo,
    lumped_weights,
    matrix_exports,
)


@pytest.fixture(scope='module')
def coarse_mesh(coarse_patch):
    return build_shell_mesh(coarse_patch, 0.1)


@pytest.fixture(scope='module')
def coarse_forms(coarse_mesh):
    return assemble_forms(coarse_mesh, single_thread=True)


class TestShellMesh:
    """Test cases for the hexahedral shell mesh."""

    def test_counts(self, coarse_mesh):
        """8 x 8 x 2 cells on a periodic lattice give 648 dofs."""
        assert coarse_mesh.n_nodes == 8 * 9 * 3
        assert coarse_mesh.n_dofs == 648
        assert coarse_mesh.n_elements == 8 * 8 * 2
        assert len(coarse_mesh.clamped_nodes) == 2 * 8 * 3
        assert len(coarse_mesh.free_dofs()) == 3 * (216 - 48)

    def test_layers_follow_the_normal(self, coarse_mesh, coarse_patch):
        """Through-thickness nodes sit at xi = -h/2, 0, h/2 along the oriented normal."""
        mid = coarse_mesh.node_index(2, 3, 1)
        top = coarse_mesh.node_index(2, 3, 2)
        np.testing.assert_allclose(coarse_mesh.coordinates[mid], coarse_patch.position[2, 3], atol=1e-14)
        offset = coarse_mesh.coordinates[top] - coarse_mesh.coordinates[mid]
        np.testing.assert_allclose(offset, 0.05 * coarse_patch.orientation * coarse_patch.normal[2, 3],
                                   atol=1e-14)

    def test_periodic_wrap(self, coarse_mesh):
        """Index n_t wraps to 0."""
        assert coarse_mesh.node_index(8, 0, 0) == coarse_mesh.node_index(0, 0, 0)

    def test_positive_jacobians(self, coarse_mesh):
        """Every Gauss point has a positive Jacobian."""
        assert np.all(coarse_mesh.det_jacobian > 0)

    def test_resample(self, coarse_patch):
        """Explicit grid sizes resample the patch."""
        mesh = build_shell_mesh(coarse_patch, 0.1, n_t=12, n_s=10)
        assert (mesh.n_t, mesh.n_s) == (12, 10)
        assert mesh.patch.n_s == 10

    @pytest.mark.parametrize("h, n_xi", [(0.0, 2), (-0.1, 2), (0.1, 1)])
    def test_invalid_arguments(self, coarse_patch, h, n_xi):
        """Non-positive thickness or a single layer are rejected."""
        with pytest.raises(ValidationError):
            build_shell_mesh(coarse_patch, h, n_xi=n_xi)

    def test_focal_bound(self, cylinder_patch):
        """h * max|k| >= 1.5 is refused on the unit cylinder."""
        with pytest.raises(FocalBoundError) as excinfo:
            build_shell_mesh(cylinder_patch, 1.6)
        assert excinfo.value.max_curvature == pytest.approx(1.0)


class TestForms:
    """Test cases for the assembled quadratic forms."""

    def test_symmetric(self, coarse_forms):
        """A and B are symmetric."""
        for matrix in (coarse_forms.A_full, coarse_forms.B_full):
            assert abs(matrix - matrix.T).max() < 1e-12

    def test_clamped_sizes(self, coarse_forms):
        """The clamped forms act on the free dofs only."""
        assert coarse_forms.A.shape == (504, 504)
        assert coarse_forms.B.shape == (504, 504)

    def test_a_below_b(self, coarse_forms):
        """x^T A x <= x^T B x since |sym M| <= |M| pointwise."""
        rng = np.random.default_rng(0)
        for _ in range(5):
            x = rng.standard_normal(coarse_forms.A.shape[0])
            assert x @ (coarse_forms.A @ x) <= x @ (coarse_forms.B @ x) * (1 + 1e-12)

    def test_clamped_b_is_spd(self, coarse_forms):
        """The clamped B has a Cholesky factorisation."""
        factor = sla.cholesky(coarse_forms.B.toarray())
        assert np.all(np.diag(factor) > 0)

    def test_korn_eigenvalue_matches_dense(self, coarse_forms):
        """LOBPCG on the assembled pencil agrees with the dense solver and lies in (0, 1]."""
        expected = sla.eigh(coarse_forms.A.toarray(), coarse_forms.B.toarray(), eigvals_only=True)[0]
        report = smallest_eig(coarse_forms.A, coarse_forms.B)
        assert report.converged
        assert 0.0 < expected <= 1.0
        assert report.eigenvalue == pytest.approx(expected, rel=1e-6)

    def test_translations_in_kernel(self, coarse_mesh, coarse_forms):
        """Constant displacements have zero energy in both forms."""
        x = coarse_mesh.nodal_field(lambda X: np.broadcast_to([1.0, -2.0, 0.5], X.shape))
        assert np.max(np.abs(coarse_forms.A_full @ x)) < 1e-10
        assert np.max(np.abs(coarse_forms.B_full @ x)) < 1e-10

    def test_rotations_in_kernel_of_a(self, coarse_mesh, coarse_forms):
        """Trilinear elements reproduce linear fields, so rotations have zero strain energy."""
        x = coarse_mesh.nodal_field(lambda X: np.cross([0.3, -1.0, 0.7], X))
        a_energy = x @ (coarse_forms.A_full @ x)
        b_energy = x @ (coarse_forms.B_full @ x)
        assert b_energy > 0
        assert abs(a_energy) / b_energy < 1e-10

    def test_threaded_matches_serial(self, coarse_mesh, coarse_forms):
        """Chunked threaded assembly gives bit-identical matrices."""
        threaded = assemble_forms(coarse_mesh, max_workers=4)
        assert (threaded.A != coarse_forms.A).nnz == 0
        assert (threaded.B != coarse_forms.B).nnz == 0


class TestVolume:
    """Test cases for the shell volume checks."""

    def test_exact_volume_cylinder(self, cylinder_patch):
        """A flat band has volume area times thickness."""
        assert exact_volume(cylinder_patch, 0.2) == pytest.approx(2 * math.pi * 0.2, rel=1e-12)

    def test_discrete_volume(self, mixed_patch):
        """The mesh volume approaches the exact one."""
        mesh = build_shell_mesh(mixed_patch, 0.1)
        assert discrete_volume(mesh) == pytest.approx(exact_volume(mixed_patch, 0.1), rel=1e-2)

    def test_lumped_weights_positive(self, coarse_mesh):
        """Every node gets a positive share of the volume."""
        weights = lumped_weights(coarse_mesh)
        assert weights.shape == (coarse_mesh.n_nodes,)
        assert np.all(weights > 0)


class TestExport:
    """Test cases for COO export."""

    def test_export_coo(self, tmp_path):
        """Entries are written row-major with full precision."""
        matrix = sp.csr_matrix(np.array([[0.0, 2.5], [1.0, 0.0]]))
        path = export_coo(matrix, str(tmp_path / 'out' / 'm.coo'))
        with open(path) as f:
            lines = f.read().splitlines()
        assert lines == ['0 1 2.5000000000000000e+00', '1 0 1.0000000000000000e+00']

    def test_matrix_exports(self, coarse_forms, tmp_path):
        """Both clamped forms are written with their label."""
        paths = matrix_exports(coarse_forms, str(tmp_path), 'h0.1')
        assert [os.path.basename(p) for p in paths] == ['A_h0.1.coo', 'B_h0.1.coo']
        with open(paths[0]) as f:
            assert sum(1 for _ in f) == coarse_forms.A.nnz
