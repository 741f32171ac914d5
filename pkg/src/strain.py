"""Displacements of a surface band and the strain system they satisfy.

A displacement is an ambient vector field ``y`` on the band, split as
``y = W + w n``. Its strain is ``sym DW + w Pi``; the auxiliary fields are
``v = div(QW) / 2`` and ``V = Q(Dw - Pi W)``. This module evaluates these
fields, the residuals of the first-order system they obey, and the two
ratio monitors comparing displacement norms with strain norms.
"""

import math
import time
import functools
import threading
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from exceptions import DegenerateSampleError, LinearSolveError, ValidationError
from geometry import SurfacePatch, band_difference, periodic_difference
from logging_config import get_logger, log_stage
from tensorcalc import (
    ResidualReport,
    TensorField,
    band_cutoff,
    boundary_l2_norm,
    compose,
    convergence_rows,
    covariant_derivative,
    divergence,
    inner,
    jacobian,
    l2_norm,
    operator_field,
    partials,
    quadrature_weights,
    random_ambient,
    rotate,
    rotate_right,
    scalar_field,
    shape_field,
    sym,
    trace,
    vector_field,
)

logger = get_logger(__name__)

LOWER, UPPER = 'lower', 'upper'
BOTH_EDGES: FrozenSet[str] = frozenset((LOWER, UPPER))
CLAMP_TOLERANCE = 1e-14

_SOLVE_LOCK = threading.Lock()

RESIDUAL_NAMES = ['tangential_divergence', 'normal_gradient', 'aux_gradient',
                  'aux_divergence', 'ambient_gradient']
STRAIN_COLUMNS = ['sample_id', 'grid', 'thm11_ratio', 'thm12_ratio'] + RESIDUAL_NAMES


@dataclass(frozen=True, eq=False)
class Displacement:
    """Ambient field ``y`` on a patch with its split ``y = W + w n``.

    ``clamped_at`` names the boundary circles (``'lower'`` at s = -b0,
    ``'upper'`` at s = b1) on which ``y`` vanishes.
    """

    patch: SurfacePatch
    ambient: np.ndarray
    tangential: TensorField
    normal_part: TensorField
    clamped_at: FrozenSet[str] = frozenset()

    @classmethod
    def from_ambient(cls, patch: SurfacePatch, y: np.ndarray,
                     clamped_at: Iterable[str] = ()) -> "Displacement":
        y = np.asarray(y, dtype=float)
        if y.shape != tuple(patch.grid_shape) + (3,):
            raise ValidationError("ambient field must have one 3-vector per node",
                                  field_name='y', invalid_value=y.shape)
        clamped = frozenset(clamped_at)
        unknown = clamped - BOTH_EDGES
        if unknown:
            raise ValidationError("unknown boundary", field_name='clamped_at',
                                  invalid_value=sorted(unknown))
        for edge in clamped:
            values = y[:, 0] if edge == LOWER else y[:, -1]
            if np.max(np.abs(values)) > CLAMP_TOLERANCE:
                raise ValidationError(f"displacement does not vanish on the {edge} boundary",
                                      field_name='clamped_at', invalid_value=edge)

        along = np.einsum('...jc,...c->...j', patch.frame, y)
        w_components = np.einsum('...ij,...j->...i', patch.metric_inv, along)
        normal_part = np.einsum('...c,...c->...', y, patch.normal)
        return cls(patch, y, vector_field(patch, w_components),
                   scalar_field(patch, normal_part), clamped)

    def reassembled(self) -> np.ndarray:
        """W + w n as ambient vectors."""
        return (self.patch.push_forward(self.tangential.components)
                + self.normal_part.components[..., None] * self.patch.normal)

    def scaled(self, factor: float) -> "Displacement":
        return Displacement.from_ambient(self.patch, factor * self.ambient, self.clamped_at)


class DisplacementSource(ABC):
    """A displacement defined independently of the grid, sampled on any patch."""

    clamped_at: FrozenSet[str] = frozenset()

    @abstractmethod
    def ambient(self, patch: SurfacePatch) -> np.ndarray:
        """Ambient vectors at the nodes of ``patch``."""

    def sample(self, patch: SurfacePatch) -> Displacement:
        return Displacement.from_ambient(patch, self.ambient(patch), self.clamped_at)

    def clamped(self) -> "ClampedDisplacement":
        return ClampedDisplacement(self)


@dataclass(frozen=True)
class RigidMotion(DisplacementSource):
    """Infinitesimal rigid motion y(x) = c + omega x x."""

    translation: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    rotation: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def ambient(self, patch: SurfacePatch) -> np.ndarray:
        omega = np.broadcast_to(np.asarray(self.rotation, dtype=float), patch.position.shape)
        return np.asarray(self.translation, dtype=float) + np.cross(omega, patch.position)


@dataclass(frozen=True)
class NormalField(DisplacementSource):
    """The unit normal itself."""

    def ambient(self, patch: SurfacePatch) -> np.ndarray:
        return patch.normal.copy()


@dataclass(frozen=True)
class BumpNormal(DisplacementSource):
    """A normal displacement with a bump profile vanishing on both edges."""

    clamped_at: FrozenSet[str] = BOTH_EDGES

    def ambient(self, patch: SurfacePatch) -> np.ndarray:
        return band_cutoff(patch)[..., None] * patch.normal


@dataclass(frozen=True)
class RandomSmoothDisplacement(DisplacementSource):
    """Seeded smooth ambient field; sample ``index`` of a family."""

    seed: int = 1
    index: int = 0

    def ambient(self, patch: SurfacePatch) -> np.ndarray:
        return random_ambient(patch, self.seed, f"displacement/{self.index}")


@dataclass(frozen=True)
class ClampedDisplacement(DisplacementSource):
    """``base`` multiplied by the edge cutoff so it vanishes on both circles."""

    base: DisplacementSource = field(default_factory=NormalField)
    clamped_at: FrozenSet[str] = BOTH_EDGES

    def ambient(self, patch: SurfacePatch) -> np.ndarray:
        return band_cutoff(patch)[..., None] * self.base.ambient(patch)


def rigid_motions() -> List[RigidMotion]:
    """The three unit translations followed by the three unit rotations."""
    basis = np.eye(3)
    motions = [RigidMotion(translation=tuple(e)) for e in basis]
    motions += [RigidMotion(rotation=tuple(e)) for e in basis]
    return motions


@dataclass
class AuxFields:
    v: TensorField
    V: TensorField


def _check_patch(patch: SurfacePatch, y: Displacement) -> None:
    if y.patch is not patch:
        raise ValidationError("displacement was sampled on a different patch", field_name='y')


def strain(patch: SurfacePatch, y: Displacement) -> TensorField:
    """The strain sym DW + w Pi, a symmetric order-2 field."""
    _check_patch(patch, y)
    return sym(covariant_derivative(y.tangential)) + shape_field(patch) * y.normal_part


def aux_fields(patch: SurfacePatch, y: Displacement) -> AuxFields:
    """v = div(QW) / 2 and V = Q(Dw - Pi W)."""
    _check_patch(patch, y)
    w_field = y.tangential
    v = 0.5 * divergence(rotate(w_field))
    big_v = rotate(covariant_derivative(y.normal_part) - compose(shape_field(patch), w_field))
    return AuxFields(v=v, V=big_v)


def theorem21_values(patch: SurfacePatch, y: Displacement) -> Dict[str, float]:
    """Max-norm residuals of the strain system for one displacement on one grid."""
    _check_patch(patch, y)
    u = strain(patch, y)
    aux = aux_fields(patch, y)
    shape = shape_field(patch)
    w_field, w = y.tangential, y.normal_part
    mean = scalar_field(patch, patch.mean_trace)

    tangential_divergence = divergence(w_field) + mean * w - trace(u)
    normal_gradient = (covariant_derivative(w) - compose(shape, w_field) + rotate(aux.V))
    aux_gradient = (covariant_derivative(aux.v) - compose(shape, aux.V)
                    - rotate(divergence(rotate(rotate_right(u)))))
    aux_divergence = divergence(aux.V) + mean * aux.v + inner(rotate(shape), u)

    # tangential part of the ambient derivative, X -> tan(d_X y)
    along = np.einsum('...jc,...ck->...jk', patch.frame, partials(patch, y.ambient))
    ambient = operator_field(patch, patch.metric_inv @ along)
    ambient_gradient = ambient - (jacobian(w_field) + shape * w)

    return {
        'tangential_divergence': tangential_divergence.max_norm(),
        'normal_gradient': normal_gradient.max_norm(),
        'aux_gradient': aux_gradient.max_norm(),
        'aux_divergence': aux_divergence.max_norm(),
        'ambient_gradient': ambient_gradient.max_norm(),
    }


def theorem21_residuals(patch: SurfacePatch, source: DisplacementSource,
                        fine: Optional[SurfacePatch] = None) -> ResidualReport:
    """Residuals of the strain system on ``patch`` and a finer patch, with orders.

    The strain U is computed from ``y`` itself, so the premise U = strain(y)
    holds by construction.
    """
    fine = fine if fine is not None else patch.refine()
    coarse_values = theorem21_values(patch, source.sample(patch))
    fine_values = theorem21_values(fine, source.sample(fine))
    report = ResidualReport(preset=patch.spec.preset)
    for name in RESIDUAL_NAMES:
        report.rows.extend(convergence_rows(name, 'differential', (patch.n_s, fine.n_s),
                                            (coarse_values[name], fine_values[name])))
    return report


# -- dual norm ----------------------------------------------------------------

def riesz_matrices(patch: SurfacePatch) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """Stiffness K and mass M of (-Laplace + 1) under the patch quadrature."""
    n_t, n_s1 = patch.grid_shape
    d_t = sp.kron(periodic_difference(n_t, patch.dt), sp.identity(n_s1), format='csr')
    d_s = sp.kron(sp.identity(n_t), band_difference(n_s1, patch.ds), format='csr')
    weights = quadrature_weights(patch).ravel()
    ginv = patch.metric_inv.reshape(-1, 2, 2)
    ops = (d_t, d_s)
    stiffness = sp.csr_matrix((n_t * n_s1, n_t * n_s1))
    for i in range(2):
        for j in range(2):
            stiffness = stiffness + ops[i].T @ sp.diags(weights * ginv[:, i, j]) @ ops[j]
    mass = sp.diags(weights, format='csr')
    return stiffness.tocsr(), mass


@functools.lru_cache(maxsize=8)
def _riesz_factor(patch: SurfacePatch):
    stiffness, mass = riesz_matrices(patch)
    try:
        factor = spla.splu((stiffness + mass).tocsc())
    except RuntimeError as e:
        raise LinearSolveError(f"singular Riesz system: {e}", stage='dual_norm') from e
    return factor, mass


def dual_norm(patch: SurfacePatch, f) -> float:
    """Discrete dual Sobolev norm of a scalar field.

    Solves (K + M) u = M f and returns sqrt(f^T M u).

    Raises:
        LinearSolveError: If the discretisation is singular
    """
    values = f.components if isinstance(f, TensorField) else np.asarray(f, dtype=float)
    if values.shape != tuple(patch.grid_shape):
        raise ValidationError("scalar field does not match the patch grid", field_name='f',
                              invalid_value=values.shape)
    factor, mass = _riesz_factor(patch)
    rhs = mass @ values.ravel()
    with _SOLVE_LOCK:
        solution = factor.solve(rhs)
    if not np.all(np.isfinite(solution)):
        raise LinearSolveError("Riesz solve produced non-finite values", stage='dual_norm')
    return math.sqrt(max(float(rhs @ solution), 0.0))


# -- ratio monitors -----------------------------------------------------------

def _ratio(numerator: float, denominator: float, monitor: str) -> float:
    if denominator == 0.0:
        kind = 'degenerate' if numerator == 0.0 else 'counterexample'
        raise DegenerateSampleError(f"{monitor} denominator vanishes", kind=kind, numerator=numerator)
    return numerator / denominator


def thm11_ratio(patch: SurfacePatch, y: Displacement) -> float:
    """(|W|^2 + |w|_dual^2) / (|strain|^2 + |W|^2 on the boundary)."""
    _check_patch(patch, y)
    numerator = l2_norm(y.tangential) ** 2 + dual_norm(patch, y.normal_part) ** 2
    denominator = l2_norm(strain(patch, y)) ** 2 + boundary_l2_norm(y.tangential) ** 2
    return _ratio(numerator, denominator, 'thm11')


def thm12_ratio(patch: SurfacePatch, y_clamped: Displacement) -> float:
    """|w|^2 / (|Dw| |strain| + |strain|^2) for a displacement clamped on both edges."""
    _check_patch(patch, y_clamped)
    if y_clamped.clamped_at != BOTH_EDGES:
        raise ValidationError("displacement must be clamped on both boundary circles",
                              field_name='clamped_at', invalid_value=sorted(y_clamped.clamped_at))
    strain_norm = l2_norm(strain(patch, y_clamped))
    numerator = l2_norm(y_clamped.normal_part) ** 2
    denominator = l2_norm(covariant_derivative(y_clamped.normal_part)) * strain_norm + strain_norm ** 2
    return _ratio(numerator, denominator, 'thm12')


# -- sample families ----------------------------------------------------------

@dataclass
class StrainSample:
    sample_id: int
    grid: int
    thm11_ratio: float
    thm12_ratio: Optional[float]
    residuals: Dict[str, float]

    def as_csv_row(self) -> Dict[str, object]:
        row = {'sample_id': self.sample_id, 'grid': self.grid,
               'thm11_ratio': self.thm11_ratio,
               'thm12_ratio': self.thm12_ratio if self.thm12_ratio is not None else math.nan}
        row.update(self.residuals)
        return row


def sample_family(family: str, samples: int, seed: int) -> List[DisplacementSource]:
    """Displacements of a monitor run: ``random`` (seeded) or ``rigid`` (the six rigid motions)."""
    if family == 'rigid':
        return list(rigid_motions())
    if family == 'random':
        if samples < 1:
            raise ValidationError("need at least one sample", field_name='samples', invalid_value=samples)
        return [RandomSmoothDisplacement(seed=seed, index=i) for i in range(samples)]
    raise ValidationError("family must be 'random' or 'rigid'", field_name='family', invalid_value=family)


def evaluate_sample(patch: SurfacePatch, sample_id: int, source: DisplacementSource,
                    clamp_for_thm12: bool = True) -> StrainSample:
    """Monitors and strain-system residuals for one displacement on one grid."""
    y = source.sample(patch)
    thm12 = thm12_ratio(patch, source.clamped().sample(patch)) if clamp_for_thm12 else None
    return StrainSample(sample_id, patch.n_s, thm11_ratio(patch, y), thm12,
                        theorem21_values(patch, y))


def monitor_samples(patches: Sequence[SurfacePatch], sources: Sequence[DisplacementSource],
                    clamp_for_thm12: bool = True,
                    max_workers: Optional[int] = None) -> List[StrainSample]:
    """Evaluate every source on every patch.

    Samples may run on a thread pool; results come back in (patch, index)
    order either way. ``max_workers=1`` runs serially.
    """
    start = time.perf_counter()
    tasks = [(patch, i, source) for patch in patches for i, source in enumerate(sources)]
    for patch in patches:
        _riesz_factor(patch)

    def run(task):
        patch, i, source = task
        return evaluate_sample(patch, i, source, clamp_for_thm12)

    if max_workers == 1:
        results = [run(task) for task in tasks]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(run, tasks))

    log_stage('monitor_samples', {'grids': [p.n_s for p in patches], 'samples': len(sources)},
              time.perf_counter() - start)
    return results
