"""Thin shell around a surface band and the two quadratic forms of the Korn quotient.

The shell is the normal offset ``x + xi n(x)`` for ``|xi| < h/2``, meshed with
trilinear hexahedra on the ``(t, s, xi)`` lattice and periodic in ``t``.
``A`` is the energy of the symmetric gradient, ``B`` the energy of the full
gradient; both are clamped by removing every dof on the two lateral faces.
"""

import os
import time
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import legendre

from error_handlers import handle_numerical_errors
from exceptions import FocalBoundError, MeshError, ValidationError
from geometry import SurfacePatch, principal_curvatures
from logging_config import get_logger, log_stage

logger = get_logger(__name__)

FOCAL_MARGIN = 1.5
ASSEMBLY_CHUNKS = 8
VOLUME_GAUSS_POINTS = 24

# corners of the reference cube, first index fastest
_CORNERS = np.array([(a, b, c) for c, b, a in itertools.product((0, 1), repeat=3)])
_REFERENCE = 2.0 * _CORNERS - 1.0
_GAUSS = np.array(list(itertools.product((-1.0, 1.0), repeat=3))) / np.sqrt(3.0)


def _shape_gradients() -> np.ndarray:
    """dN_a/dr_d at the eight Gauss points, shape (8 points, 8 nodes, 3)."""
    factors = 1.0 + _GAUSS[:, None, :] * _REFERENCE[None, :, :]
    grads = np.empty((8, 8, 3))
    for d in range(3):
        others = [e for e in range(3) if e != d]
        grads[..., d] = (0.125 * _REFERENCE[None, :, d]
                         * factors[..., others[0]] * factors[..., others[1]])
    return grads


def _shape_values() -> np.ndarray:
    return 0.125 * np.prod(1.0 + _GAUSS[:, None, :] * _REFERENCE[None, :, :], axis=-1)


_DSHAPE = _shape_gradients()
_SHAPE = _shape_values()


@dataclass(frozen=True, eq=False)
class ShellMesh:
    """Hexahedral mesh of the shell, with quadrature data precomputed.

    Nodes are numbered ``(it * (n_s + 1) + is) * (n_xi + 1) + ixi`` and carry
    three dofs ``3 * node + component``.
    """

    patch: SurfacePatch
    thickness: float
    n_t: int
    n_s: int
    n_xi: int
    coordinates: np.ndarray
    elements: np.ndarray
    det_jacobian: np.ndarray
    gradients: np.ndarray
    clamped_nodes: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.n_t * (self.n_s + 1) * (self.n_xi + 1)

    @property
    def n_dofs(self) -> int:
        return 3 * self.n_nodes

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    def node_index(self, it, is_, ixi):
        return ((np.asarray(it) % self.n_t) * (self.n_s + 1) + is_) * (self.n_xi + 1) + ixi

    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.clamped_nodes] = False
        nodes = np.flatnonzero(mask)
        return (3 * nodes[:, None] + np.arange(3)).ravel()

    def nodal_field(self, y) -> np.ndarray:
        """Dof vector of an ambient field ``y(x)`` evaluated at the mesh nodes."""
        return np.asarray(y(self.coordinates), dtype=float).reshape(-1)


@dataclass
class FormPair:
    """Clamped ``A`` and ``B`` plus the unclamped matrices they were cut from."""

    A: sp.csr_matrix
    B: sp.csr_matrix
    A_full: sp.csr_matrix
    B_full: sp.csr_matrix
    free_dofs: np.ndarray


@handle_numerical_errors(stage="build_shell_mesh")
def build_shell_mesh(patch: SurfacePatch, h: float, n_t: Optional[int] = None,
                     n_s: Optional[int] = None, n_xi: int = 2) -> ShellMesh:
    """Mesh the shell of thickness ``h`` over ``patch``.

    The patch is resampled to ``n_t x n_s`` when those differ from its grid.
    Layers are stacked along ``orientation * n`` so every Jacobian is
    positive on an admissible shell.

    Raises:
        ValidationError: For ``h <= 0`` or ``n_xi < 2``
        FocalBoundError: If ``h * max|k_i| >= 1.5``
        MeshError: If any Jacobian determinant is non-positive
    """
    if not h > 0:
        raise ValidationError("thickness must be positive", field_name='h', invalid_value=h)
    if n_xi < 2:
        raise ValidationError("need at least two layers through the thickness",
                              field_name='n_xi', invalid_value=n_xi)
    patch = patch.resample(n_t or patch.n_t, n_s or patch.n_s)

    max_curvature = float(np.max(np.abs(principal_curvatures(patch))))
    if h * max_curvature >= FOCAL_MARGIN:
        raise FocalBoundError("shell thickness exceeds the focal bound", max_curvature=max_curvature,
                              thickness=h, preset=patch.spec.preset)

    n_t, n_s = patch.n_t, patch.n_s
    xi = patch.orientation * (-0.5 * h + h * np.arange(n_xi + 1) / n_xi)
    coordinates = (patch.position[:, :, None, :]
                   + xi[None, None, :, None] * patch.normal[:, :, None, :])

    it, is_, ixi = np.meshgrid(np.arange(n_t), np.arange(n_s), np.arange(n_xi), indexing='ij')
    it, is_, ixi = it.ravel(), is_.ravel(), ixi.ravel()
    stride_xi = n_xi + 1
    elements = np.stack([
        (((it + a) % n_t) * (n_s + 1) + is_ + b) * stride_xi + ixi + c
        for a, b, c in _CORNERS
    ], axis=1)

    x_elem = coordinates.reshape(-1, 3)[elements]
    jac = np.einsum('eai,qad->eqid', x_elem, _DSHAPE)
    det = np.linalg.det(jac)
    if np.any(det <= 0):
        bad = int(np.argmin(det.min(axis=1)))
        raise MeshError(f"non-positive Jacobian determinant {det.min():.6g}", element=bad)
    inverse = np.linalg.inv(jac)
    gradients = np.einsum('qad,eqdi->eqai', _DSHAPE, inverse)

    clamped = np.concatenate([
        np.ravel(((np.arange(n_t)[:, None] * (n_s + 1) + edge) * stride_xi
                  + np.arange(stride_xi)[None, :]))
        for edge in (0, n_s)
    ])

    mesh = ShellMesh(patch, float(h), n_t, n_s, n_xi, coordinates.reshape(-1, 3), elements,
                     det, gradients, np.sort(clamped))
    logger.info("Shell mesh built", extra={
        'preset': patch.spec.preset, 'h': h, 'n_t': n_t, 'n_s': n_s, 'n_xi': n_xi,
        'dofs': mesh.n_dofs,
    })
    return mesh


def element_matrices(mesh: ShellMesh, chunk: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Element matrices of the symmetric-gradient and full-gradient energies.

    Returns two arrays of shape (len(chunk), 24, 24) with local dof ``3a + i``.
    """
    grads = mesh.gradients[chunk]
    weights = mesh.det_jacobian[chunk]
    gram = np.einsum('eqai,eqbi,eq->eab', grads, grads, weights)
    full = np.einsum('eab,ik->eaibk', gram, np.eye(3))
    cross = np.einsum('eqak,eqbi,eq->eaibk', grads, grads, weights)
    n = len(chunk)
    return (0.5 * (full + cross)).reshape(n, 24, 24), full.reshape(n, 24, 24)


def _element_triplets(mesh: ShellMesh, chunk: np.ndarray):
    a_local, b_local = element_matrices(mesh, chunk)
    dofs = (3 * mesh.elements[chunk][:, :, None] + np.arange(3)).reshape(len(chunk), 24)
    rows = np.repeat(dofs[:, :, None], 24, axis=2)
    cols = np.repeat(dofs[:, None, :], 24, axis=1)
    return rows.ravel(), cols.ravel(), a_local.ravel(), b_local.ravel()


@handle_numerical_errors(stage="assemble_forms")
def assemble_forms(mesh: ShellMesh, max_workers: Optional[int] = None,
                   single_thread: bool = False) -> FormPair:
    """Assemble ``A`` and ``B`` and eliminate the clamped dofs.

    Elements are split into a fixed number of chunks; chunk triplets are
    merged in element order, so threaded and serial runs give identical
    matrices.
    """
    start = time.perf_counter()
    chunks = [c for c in np.array_split(np.arange(mesh.n_elements), ASSEMBLY_CHUNKS) if len(c)]

    if single_thread or max_workers == 1:
        parts = [_element_triplets(mesh, chunk) for chunk in chunks]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            parts = list(pool.map(lambda chunk: _element_triplets(mesh, chunk), chunks))

    rows = np.concatenate([p[0] for p in parts])
    cols = np.concatenate([p[1] for p in parts])
    shape = (mesh.n_dofs, mesh.n_dofs)
    a_full = sp.coo_matrix((np.concatenate([p[2] for p in parts]), (rows, cols)), shape=shape).tocsr()
    b_full = sp.coo_matrix((np.concatenate([p[3] for p in parts]), (rows, cols)), shape=shape).tocsr()

    free = mesh.free_dofs()
    forms = FormPair(a_full[free][:, free].tocsr(), b_full[free][:, free].tocsr(),
                     a_full, b_full, free)
    log_stage('assemble_forms', {'dofs': mesh.n_dofs, 'free_dofs': len(free),
                                 'nnz': forms.B_full.nnz}, time.perf_counter() - start)
    return forms


def lumped_weights(mesh: ShellMesh) -> np.ndarray:
    """Row sums of the scalar mass matrix, one weight per node."""
    contributions = np.einsum('qa,eq->ea', _SHAPE, mesh.det_jacobian)
    return np.bincount(mesh.elements.ravel(), weights=contributions.ravel(), minlength=mesh.n_nodes)


def discrete_volume(mesh: ShellMesh) -> float:
    return float(lumped_weights(mesh).sum())


def exact_volume(patch: SurfacePatch, h: float, n_gauss: int = VOLUME_GAUSS_POINTS) -> float:
    """Volume of the shell, the integral of ``h + kappa h^3 / 12`` over the band.

    Gauss-Legendre in s, trapezoid in t (periodic integrand).
    """
    spec = patch.spec
    nodes, weights = legendre.leggauss(n_gauss)
    half = 0.5 * (spec.b0 + spec.b1)
    s = -spec.b0 + half * (nodes + 1.0)
    t_grid, s_grid = np.meshgrid(patch.t, s, indexing='ij')
    data = patch.geometry_at(t_grid, s_grid)
    density = data['sqrt_det_g'] * (h + data['gauss_curvature'] * h ** 3 / 12.0)
    return float(patch.dt * half * np.sum(density * weights[None, :]))


def export_coo(matrix: sp.spmatrix, path: str) -> str:
    """Write a sparse matrix as ``row col value`` lines."""
    directory = os.path.dirname(path)
    if directory and not os.path.exists(directory):
        os.makedirs(directory)
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with open(path, 'w') as f:
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            f.write(f"{r} {c} {v:.16e}\n")
    logger.info("Matrix exported", extra={'path': path, 'nnz': int(coo.nnz)})
    return path


def matrix_exports(forms: FormPair, directory: str, label: str) -> List[str]:
    return [export_coo(forms.A, os.path.join(directory, f"A_{label}.coo")),
            export_coo(forms.B, os.path.join(directory, f"B_{label}.coo"))]
