"""Smallest eigenvalue of a symmetric pencil and power-law fits of its scaling.

``smallest_eig`` is a blocked LOBPCG iteration for ``A x = lambda B x`` with
``B`` positive definite, preconditioned by an incomplete LU factorisation of
``A + sigma B``. Small problems go straight to a dense solver.
"""

import time
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import stats

from error_handlers import handle_numerical_errors
from exceptions import EigensolverError, ValidationError
from logging_config import get_logger, log_stage

logger = get_logger(__name__)

MAX_BLOCK = 4
WARMUP_STEPS = 20
SYMMETRY_TOLERANCE = 1e-12
DIAGONAL_BOOSTS = (1e-3, 1e-2, 1e-1)
MONOTONE_SLACK = 1e-10


@dataclass
class EigReport:
    eigenvalue: float
    eigenvector: np.ndarray
    residual: float
    iterations: int
    seconds: float
    converged: bool
    history: List[float] = field(default_factory=list)
    monotone: bool = True


class ExponentFit(NamedTuple):
    slope: float
    intercept: float
    stderr: float


def _as_sparse(matrix) -> sp.csr_matrix:
    return sp.csr_matrix(matrix, dtype=float)


def _check_pencil(A: sp.csr_matrix, B: sp.csr_matrix, tol: float, block: int) -> None:
    if not 0.0 < tol <= 1e-4:
        raise ValidationError("tol must lie in (0, 1e-4]", field_name='tol', invalid_value=tol)
    if not 1 <= block <= MAX_BLOCK:
        raise ValidationError(f"block must lie in 1..{MAX_BLOCK}", field_name='block',
                              invalid_value=block)
    if A.shape[0] != A.shape[1] or B.shape != A.shape:
        raise ValidationError("A and B must be square and of the same size", field_name='shape',
                              invalid_value=(A.shape, B.shape))
    for name, matrix in (('A', A), ('B', B)):
        scale = abs(matrix).max() if matrix.nnz else 0.0
        skew = abs(matrix - matrix.T).max() if matrix.nnz else 0.0
        if skew > SYMMETRY_TOLERANCE * max(scale, 1.0):
            raise ValidationError(f"{name} is not symmetric", field_name=name, invalid_value=skew)
    if np.any(B.diagonal() <= 0):
        raise EigensolverError("B is not positive definite (non-positive diagonal)")


def relative_residual(A, B, x: np.ndarray, eigenvalue: float) -> float:
    """||Ax - lambda Bx|| / (||Ax|| + lambda ||Bx||)."""
    ax, bx = A @ x, B @ x
    denominator = np.linalg.norm(ax) + abs(eigenvalue) * np.linalg.norm(bx)
    if denominator == 0.0:
        return 0.0
    return float(np.linalg.norm(ax - eigenvalue * bx) / denominator)


def _b_orthonormalize(B, V: np.ndarray, BV: Optional[np.ndarray] = None,
                      AV: Optional[np.ndarray] = None):
    """Make the columns of ``V`` B-orthonormal, carrying ``BV`` and ``AV`` along.

    Raises LinAlgError on breakdown.
    """
    norms = np.linalg.norm(V, axis=0)
    norms[norms == 0.0] = 1.0
    V = V / norms
    BV = B @ V if BV is None else BV / norms
    gram = V.T @ BV
    upper = sla.cholesky(0.5 * (gram + gram.T), lower=False)
    V = sla.solve_triangular(upper, V.T, trans='T').T
    BV = sla.solve_triangular(upper, BV.T, trans='T').T
    if AV is not None:
        AV = sla.solve_triangular(upper, (AV / norms).T, trans='T').T
    return V, BV, AV


def _dense_smallest(A: sp.csr_matrix, B: sp.csr_matrix, started: float) -> EigReport:
    try:
        values, vectors = sla.eigh(A.toarray(), B.toarray())
    except np.linalg.LinAlgError as e:
        raise EigensolverError(f"B is not positive definite: {e}") from e
    x = vectors[:, 0]
    residual = relative_residual(A, B, x, values[0])
    return EigReport(float(values[0]), x, residual, 1, time.perf_counter() - started, True,
                     [float(values[0])])


def _incomplete_solver(matrix: sp.csr_matrix) -> Callable[[np.ndarray], np.ndarray]:
    factor = spla.spilu(matrix.tocsc())
    return factor.solve


def _warm_start(A: sp.csr_matrix, B: sp.csr_matrix, X: np.ndarray) -> Tuple[float, np.ndarray]:
    """Block inverse-iteration steps with an incomplete factor of A.

    Returns a Rayleigh-quotient upper bound for the smallest eigenvalue and
    the improved block.
    """
    try:
        solve = _incomplete_solver(A)
    except RuntimeError:
        logger.debug("Warm-up skipped: A has no incomplete factorisation")
        solve = None

    for _ in range(WARMUP_STEPS if solve is not None else 0):
        candidate = np.column_stack([solve(col) for col in (B @ X).T])
        if not np.all(np.isfinite(candidate)):
            break
        X, _ = np.linalg.qr(candidate)

    bx = B @ X
    quotients = np.einsum('ij,ij->j', X, A @ X) / np.einsum('ij,ij->j', X, bx)
    return float(np.max(quotients)), X


def _preconditioner(A: sp.csr_matrix, B: sp.csr_matrix, sigma: float) -> Callable[[np.ndarray], np.ndarray]:
    """Incomplete LU of A + sigma B, with diagonal boosts and finally Jacobi as fallbacks."""
    shifted = (A + abs(sigma) * B).tocsr()
    diagonal = shifted.diagonal()
    for boost in (0.0,) + DIAGONAL_BOOSTS:
        try:
            solve = _incomplete_solver(shifted + boost * sp.diags(diagonal))
        except RuntimeError:
            logger.warning("Incomplete factorisation failed", extra={'boost': boost})
            continue
        trial = solve(np.ones(shifted.shape[0]))
        if np.all(np.isfinite(trial)):
            return lambda block: np.column_stack([solve(col) for col in block.T])
    logger.warning("Falling back to a Jacobi preconditioner")
    inverse = 1.0 / np.where(diagonal > 0, diagonal, 1.0)
    return lambda block: inverse[:, None] * block


def _rayleigh_rise(previous: float, current: float) -> bool:
    """Whether a Ritz value went up by more than round-off."""
    return current > previous + MONOTONE_SLACK * abs(previous)


def _rayleigh_ritz(blocks: Sequence[Tuple[np.ndarray, np.ndarray, np.ndarray]], k: int):
    S = np.hstack([b[0] for b in blocks])
    AS = np.hstack([b[1] for b in blocks])
    BS = np.hstack([b[2] for b in blocks])
    gram_a = S.T @ AS
    gram_b = S.T @ BS
    theta, coefficients = sla.eigh(0.5 * (gram_a + gram_a.T), 0.5 * (gram_b + gram_b.T))
    c = coefficients[:, :k]
    return theta[:k], c, S, AS, BS


@handle_numerical_errors(stage="eigensolve")
def smallest_eig(A, B, tol: float = 1e-8, max_iter: int = 5000, seed: int = 0,
                 block: int = 2) -> EigReport:
    """Smallest eigenvalue of ``A x = lambda B x``.

    The iteration starts from a seeded random block, so identical inputs
    give identical iterates. When ``max_iter`` is reached the best estimate is
    returned with ``converged=False``.

    Raises:
        ValidationError: For a bad tolerance, block size or non-symmetric input
        EigensolverError: If B is not positive definite or B-orthogonality
            breaks down twice
    """
    started = time.perf_counter()
    A, B = _as_sparse(A), _as_sparse(B)
    _check_pencil(A, B, tol, block)
    n = A.shape[0]

    if n < 5 * block:
        report = _dense_smallest(A, B, started)
        log_stage('eigensolve', {'n': n, 'method': 'dense'}, report.seconds)
        return report

    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, block))
    sigma, X = _warm_start(A, B, X)
    precondition = _preconditioner(A, B, sigma)

    try:
        X, BX, _ = _b_orthonormalize(B, X)
    except np.linalg.LinAlgError as e:
        raise EigensolverError(f"B is not positive definite: {e}", iterations=0) from e
    AX = A @ X
    theta, c = sla.eigh(0.5 * (X.T @ AX + AX.T @ X))
    X, AX, BX = X @ c, AX @ c, BX @ c
    iterations = 1
    history = [float(theta[0])]
    P = AP = BP = None
    restarted = False
    monotone = True

    while True:
        R = AX - BX * theta
        scale = np.linalg.norm(AX, axis=0) + np.abs(theta) * np.linalg.norm(BX, axis=0)
        relative = np.linalg.norm(R, axis=0) / np.where(scale > 0, scale, 1.0)
        if relative[0] <= tol or iterations >= max_iter:
            break
        active = relative > tol

        W = precondition(R[:, active])
        W = W - X @ (BX.T @ W)
        try:
            W, BW, _ = _b_orthonormalize(B, W)
            blocks = [(X, AX, BX), (W, A @ W, BW)]
            if P is not None:
                blocks.append((P, AP, BP))
            theta, c, S, AS, BS = _rayleigh_ritz(blocks, block)
        except np.linalg.LinAlgError as e:
            if restarted:
                raise EigensolverError(f"B-orthogonality broke down after a restart: {e}",
                                       iterations=iterations, residual=float(relative[0])) from e
            logger.warning("LOBPCG breakdown; restarting without search directions",
                           extra={'iterations': iterations})
            restarted = True
            P = AP = BP = None
            continue

        X = S @ c
        AX, BX = A @ X, B @ X
        tail = c[block:]
        P, AP, BP = S[:, block:] @ tail, AS[:, block:] @ tail, BS[:, block:] @ tail
        overlap = BX.T @ P
        try:
            P, BP, AP = _b_orthonormalize(B, P - X @ overlap, BP - BX @ overlap, AP - AX @ overlap)
        except np.linalg.LinAlgError:
            P = AP = BP = None
        restarted = False
        iterations += 1
        if _rayleigh_rise(history[-1], float(theta[0])):
            monotone = False
            logger.warning("Ritz value increased", extra={
                'iterations': iterations, 'previous': history[-1], 'current': float(theta[0]),
            })
        history.append(float(theta[0]))

    x = X[:, 0]
    residual = relative_residual(A, B, x, theta[0])
    converged = residual <= tol
    seconds = time.perf_counter() - started
    if not converged:
        logger.warning("Eigensolver did not converge", extra={
            'iterations': iterations, 'residual': residual, 'max_iter': max_iter,
        })
    log_stage('eigensolve', {'n': n, 'block': block, 'iterations': iterations,
                             'residual': residual}, seconds)
    return EigReport(float(theta[0]), x, residual, iterations, seconds, converged, history,
                     monotone)


def fit_exponent(points: Sequence[Tuple[float, float]]) -> ExponentFit:
    """Least-squares line through ``(log h, log lambda)``.

    Raises:
        ValidationError: For fewer than 3 points or non-positive values
    """
    data = np.asarray(points, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2 or data.shape[0] < 3:
        raise ValidationError("need at least 3 (h, lambda) points", field_name='points',
                              invalid_value=len(points))
    if not np.all(np.isfinite(data)) or np.any(data <= 0):
        raise ValidationError("h and lambda must be positive", field_name='points')
    if np.ptp(data[:, 0]) == 0:
        raise ValidationError("thicknesses must not all be equal", field_name='points')
    fit = stats.linregress(np.log(data[:, 0]), np.log(data[:, 1]))
    return ExponentFit(float(fit.slope), float(fit.intercept), float(fit.stderr))
