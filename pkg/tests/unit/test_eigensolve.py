import pytest
import sys
import os
import math

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..', 'src'))

from eigensolve import _rayleigh_rise, fit_exponent, relative_residual, smallest_eig
from exceptions import EigensolverError, ValidationError


def spd_pencil(n, seed):
    """A sparse SPD pencil: a 1D stiffness plus a random diagonal over a random mass."""
    rng = np.random.default_rng(seed)
    main = 2.0 + rng.uniform(0.0, 1.0, n)
    off = -np.ones(n - 1)
    A = sp.diags([off, main, off], [-1, 0, 1], format='csr')
    B = sp.diags(rng.uniform(0.5, 2.0, n), format='csr')
    return A, B


def dense_pencil(seed):
    """A dense SPD pencil of size 50 to 100 with a known, well separated spectrum of A."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(50, 101))
    basis, _ = np.linalg.qr(rng.standard_normal((n, n)))
    A = (basis * np.linspace(1.0, 10.0, n)) @ basis.T
    Y = rng.standard_normal((n, n))
    B = np.eye(n) + 0.1 * (Y @ Y.T) / n
    return 0.5 * (A + A.T), 0.5 * (B + B.T)


def dense_smallest(A, B):
    return sla.eigh(A.toarray(), B.toarray(), eigvals_only=True)[0]


class TestSmallestEig:
    """Test cases for the pencil eigensolver."""

    def test_identical_forms(self):
        """A = B gives eigenvalue 1."""
        A = sp.identity(50, format='csr')
        report = smallest_eig(A, A)
        assert report.eigenvalue == pytest.approx(1.0, abs=1e-12)
        assert report.converged

    def test_small_diagonal(self):
        """Tiny problems use the dense path."""
        report = smallest_eig(np.diag([2.0, 3.0]), np.eye(2))
        assert report.eigenvalue == pytest.approx(2.0)
        assert report.iterations == 1
        assert abs(abs(report.eigenvector[0]) - 1.0) < 1e-12

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_dense_oracle(self, seed):
        """Random SPD pencils agree with a dense generalized solver."""
        A, B = spd_pencil(200, seed)
        report = smallest_eig(A, B, tol=1e-8)
        assert report.converged
        assert report.residual <= 1e-8
        assert report.eigenvalue == pytest.approx(dense_smallest(A, B), rel=1e-7)
        assert relative_residual(A, B, report.eigenvector, report.eigenvalue) == pytest.approx(report.residual)

    @pytest.mark.parametrize("seed", range(20))
    def test_dense_pencils(self, seed):
        """Twenty random dense pencils of size at most 100 agree with the dense solver."""
        A, B = dense_pencil(seed)
        report = smallest_eig(A, B)
        assert report.converged
        expected = sla.eigh(A, B, eigvals_only=True)[0]
        assert report.eigenvalue == pytest.approx(expected, rel=1e-8)

    def test_scaling(self):
        """lambda(2A, B) = 2 lambda and lambda(A, 2B) = lambda / 2."""
        A, B = spd_pencil(120, 3)
        base = smallest_eig(A, B).eigenvalue
        assert smallest_eig(2 * A, B).eigenvalue == pytest.approx(2 * base, rel=1e-7)
        assert smallest_eig(A, 2 * B).eigenvalue == pytest.approx(base / 2, rel=1e-7)

    def test_permutation_invariance(self):
        """Renumbering the unknowns does not change the eigenvalue."""
        A, B = spd_pencil(120, 4)
        perm = np.random.default_rng(5).permutation(120)
        P = sp.identity(120, format='csr')[perm]
        base = smallest_eig(A, B).eigenvalue
        permuted = smallest_eig(P @ A @ P.T, P @ B @ P.T).eigenvalue
        assert permuted == pytest.approx(base, rel=1e-7)

    def test_history_is_monotone(self):
        """Ritz values do not increase."""
        A = sp.diags(np.linspace(1.0, 2.0, 200), format='csr')
        report = smallest_eig(A, sp.identity(200, format='csr'), max_iter=50)
        steps = np.diff(report.history)
        assert np.all(steps <= 1e-10)
        assert report.monotone

    def test_rayleigh_rise(self):
        """Only increases beyond round-off count as a monotonicity violation."""
        assert not _rayleigh_rise(0.5, 0.5)
        assert not _rayleigh_rise(0.5, 0.4)
        assert not _rayleigh_rise(0.5, 0.5 * (1 + 1e-13))
        assert _rayleigh_rise(0.5, 0.5 * (1 + 1e-8))

    def test_seed_determinism(self):
        """Identical inputs and seed give identical results."""
        A, B = spd_pencil(150, 6)
        first = smallest_eig(A, B, seed=11)
        second = smallest_eig(A, B, seed=11)
        assert first.eigenvalue == second.eigenvalue
        assert first.iterations == second.iterations

    def test_not_converged(self):
        """Hitting max_iter returns the estimate with converged=False."""
        A = sp.diags(np.linspace(1.0, 2.0, 200), format='csr')
        report = smallest_eig(A, sp.identity(200, format='csr'), max_iter=2)
        assert not report.converged
        assert report.iterations == 2
        assert report.eigenvalue >= 1.0 - 1e-12

    @pytest.mark.parametrize("kwargs", [{'tol': 0.0}, {'tol': 1e-3}, {'block': 0}, {'block': 5}])
    def test_bad_parameters(self, kwargs):
        """Tolerance and block size are validated."""
        A, B = spd_pencil(30, 0)
        with pytest.raises(ValidationError):
            smallest_eig(A, B, **kwargs)

    def test_shape_mismatch(self):
        """A and B must have the same shape."""
        with pytest.raises(ValidationError):
            smallest_eig(sp.identity(20), sp.identity(21))

    def test_asymmetric(self):
        """Non-symmetric input is rejected."""
        A = sp.csr_matrix(np.triu(np.ones((20, 20))))
        with pytest.raises(ValidationError):
            smallest_eig(A, sp.identity(20))

    def test_b_not_positive(self):
        """A zero on the diagonal of B is an eigensolver error."""
        diagonal = np.ones(30)
        diagonal[7] = 0.0
        with pytest.raises(EigensolverError):
            smallest_eig(sp.identity(30), sp.diags(diagonal))

    def test_indefinite_b_dense(self):
        """Dense Cholesky failure is reported as an eigensolver error."""
        B = np.array([[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(EigensolverError):
            smallest_eig(np.eye(2), B)


class TestFitExponent:
    """Test cases for log-log exponent fits."""

    def test_exact_four_thirds(self):
        """Points on 7 h^(4/3) give slope 4/3 and no error."""
        fit = fit_exponent([(h, 7.0 * h ** (4.0 / 3.0)) for h in (0.15, 0.1, 0.075, 0.05)])
        assert fit.slope == pytest.approx(4.0 / 3.0, abs=1e-12)
        assert fit.intercept == pytest.approx(math.log(7.0))
        assert fit.stderr == pytest.approx(0.0, abs=1e-10)

    def test_linear(self):
        """Points on c h give slope 1."""
        fit = fit_exponent([(h, 0.3 * h) for h in (0.2, 0.1, 0.05)])
        assert fit.slope == pytest.approx(1.0)

    def test_two_point_oracle(self):
        """A midpoint on the same power law keeps the two-point slope."""
        beta = math.log(1e-3 / 4.1e-4) / math.log(2.0)
        points = [(0.1, 1e-3), (0.075, 1e-3 * 0.75 ** beta), (0.05, 4.1e-4)]
        fit = fit_exponent(points)
        assert fit.slope == pytest.approx(beta, abs=1e-12)
        assert fit.slope == pytest.approx(1.286, abs=1e-3)

    @pytest.mark.parametrize("points", [
        [(0.1, 1.0), (0.05, 0.5)],
        [(0.1, 1.0), (0.05, -0.5), (0.02, 0.1)],
        [(0.1, 1.0), (0.1, 0.5), (0.1, 0.1)],
    ])
    def test_invalid_points(self, points):
        """Too few, non-positive or degenerate points are rejected."""
        with pytest.raises(ValidationError):
            fit_exponent(points)
