"""Parametric surface bands and their pointwise geometry.

A band is the image of ``alpha(t, s)`` with ``t`` periodic in ``[0, a)`` and
``s`` in ``[-b0, b1]``. Everything cached on a ``SurfacePatch`` is evaluated
from closed-form derivatives of ``alpha`` at the grid nodes, so the metric,
normal, second fundamental form, Christoffel symbols and the rotation ``Q``
carry no discretisation error. Finite differences only enter through the
``diff_t`` / ``diff_s`` operators used by the calculus and by the curvature
cross-checks.

Conventions:

- tangent vectors are stored by their coordinate components ``(X^t, X^s)``;
- 2-tensors are stored as the mixed matrix ``A^i_j`` of the endomorphism with
  ``U(X, Y) = <A X, Y>``; ``shape_operator`` and ``rotation`` follow this;
- ``second_form`` holds the covariant components ``Pi_ij = <d_i n, alpha_j>``.
"""

import math
import functools
from dataclasses import dataclass, replace
from typing import Any, Dict, Iterator, List, Mapping, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import Polynomial

from exceptions import GeometryError, ValidationError
from error_handlers import handle_numerical_errors
from logging_config import get_logger

logger = get_logger(__name__)

REVOLUTION_PRESETS = ('mixed_inflection', 'cylinder', 'custom_revolution')
TORUS_PRESETS = ('torus_outer', 'torus_inner')
PRESETS = REVOLUTION_PRESETS + TORUS_PRESETS

# Curvature-assumption tolerances
KAPPA_MIN = 1e-6
GRADIENT_MIN = 1e-6
NORMAL_CURVATURE_MIN = 1e-6

# Korn exponents and acceptance windows by band type
REFERENCE_EXPONENTS = {
    'elliptic': 1.0,
    'parabolic': 1.5,
    'hyperbolic': 4.0 / 3.0,
    'mixed': 4.0 / 3.0,
}
EXPONENT_WINDOWS = {
    'elliptic': (0.85, 1.15),
    'parabolic': (1.35, 1.65),
    'hyperbolic': (1.20, 1.47),
    'mixed': (1.20, 1.47),
}

GEOMETRY_COLUMNS = ['t', 's', 'x', 'y', 'z', 'kappa', 'trPi', 'Pi_tt']

_CENTRAL_OFFSETS = np.array([-2, -1, 1, 2])
_CENTRAL_STENCIL = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0
# derivative at nodes 0 and 1 from nodes 0..4
_EDGE_STENCILS = (
    np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0,
    np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0,
)


@dataclass(frozen=True)
class BandSpec:
    """Preset name, geometric parameters, band limits and grid of a surface band."""

    preset: str
    b0: float = 0.5
    b1: float = 0.5
    period: float = 2.0 * math.pi
    n_t: int = 64
    n_s: int = 64
    profile: Tuple[float, ...] = (1.0,)
    major_radius: float = 2.0
    tube_radius: float = 1.0
    center_angle: float = 0.0

    @classmethod
    def from_config(cls, surface: Mapping[str, Any]) -> "BandSpec":
        """Build a spec from the ``[surface]`` section of an effective configuration."""
        grid = int(surface.get('grid', 64))
        kwargs = {key: surface[key] for key in
                  ('b0', 'b1', 'period', 'major_radius', 'tube_radius', 'center_angle')
                  if key in surface}
        if 'profile' in surface:
            kwargs['profile'] = tuple(float(c) for c in surface['profile'])
        return cls(preset=surface['preset'], n_t=grid, n_s=grid, **kwargs)

    @property
    def wavenumber(self) -> float:
        return 2.0 * math.pi / self.period

    def with_grid(self, n_t: int, n_s: Optional[int] = None) -> "BandSpec":
        return replace(self, n_t=int(n_t), n_s=int(n_s if n_s is not None else n_t))

    def validate(self) -> "BandSpec":
        """Check the band invariants; returns ``self`` for chaining."""
        if self.preset not in PRESETS:
            raise ValidationError(f"Unknown preset; expected one of {', '.join(PRESETS)}",
                                  field_name='preset', invalid_value=self.preset)
        for name in ('b0', 'b1', 'period'):
            value = getattr(self, name)
            if not value > 0:
                raise ValidationError("must be positive", field_name=name, invalid_value=value)
        if self.n_t < 8 or self.n_t % 2:
            raise ValidationError("must be an even integer >= 8", field_name='n_t',
                                  invalid_value=self.n_t)
        if self.n_s < 8:
            raise GeometryError(f"grid too coarse to resolve the band (n_s={self.n_s} < 8)",
                                preset=self.preset)

        if self.preset in TORUS_PRESETS:
            if not self.tube_radius > 0:
                raise ValidationError("must be positive", field_name='tube_radius',
                                      invalid_value=self.tube_radius)
            if not self.major_radius > self.tube_radius:
                raise GeometryError("major radius must exceed the tube radius", preset=self.preset)
        else:
            if not self.profile:
                raise ValidationError("profile needs at least one coefficient", field_name='profile')
            z = np.linspace(-self.b1, self.b0, 2001)
            radius = Polynomial(self.profile)(z)
            if np.min(radius) <= 0:
                raise GeometryError(
                    f"non-positive profile radius {np.min(radius):.6g} at z={z[np.argmin(radius)]:.6g}",
                    preset=self.preset)
        return self


def embedding_derivatives(spec: BandSpec, t, s) -> Dict[str, np.ndarray]:
    """Closed-form position and first/second derivatives of ``alpha`` at ``(t, s)``.

    Returns a dict with ``position`` (..., 3), ``frame`` (..., 2, 3) holding
    ``alpha_t`` and ``alpha_s``, and ``hessian`` (..., 2, 2, 3).
    """
    t, s = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
    k = spec.wavenumber
    theta = k * t
    cos, sin = np.cos(theta), np.sin(theta)
    zero = np.zeros_like(theta)

    def stack(x, y, z):
        return np.stack([x, y, z], axis=-1)

    if spec.preset in TORUS_PRESETS:
        rho = spec.tube_radius
        phi = spec.center_angle - s / rho
        cphi, sphi = np.cos(phi), np.sin(phi)
        radius = spec.major_radius + rho * cphi
        position = stack(radius * cos, radius * sin, rho * sphi)
        d_t = k * stack(-radius * sin, radius * cos, zero)
        d_s = stack(sphi * cos, sphi * sin, -cphi)
        d_tt = -k * k * stack(radius * cos, radius * sin, zero)
        d_ts = k * stack(-sphi * sin, sphi * cos, zero)
        d_ss = -(1.0 / rho) * stack(cphi * cos, cphi * sin, sphi)
    else:
        # surface of revolution r(z), z = -s
        profile = Polynomial(spec.profile)
        z = -s
        r = profile(z) + zero
        dr = profile.deriv(1)(z) + zero
        ddr = profile.deriv(2)(z) + zero
        position = stack(r * cos, r * sin, z)
        d_t = k * stack(-r * sin, r * cos, zero)
        d_s = -stack(dr * cos, dr * sin, np.ones_like(z))
        d_tt = -k * k * stack(r * cos, r * sin, zero)
        d_ts = k * stack(dr * sin, -dr * cos, zero)
        d_ss = stack(ddr * cos, ddr * sin, zero)

    frame = np.stack([d_t, d_s], axis=-2)
    hessian = np.stack([np.stack([d_tt, d_ts], axis=-2),
                        np.stack([d_ts, d_ss], axis=-2)], axis=-3)
    return {'position': position, 'frame': frame, 'hessian': hessian}


def _fundamental_data(frame: np.ndarray, hessian: np.ndarray, sigma: float = 1.0) -> Dict[str, np.ndarray]:
    metric = np.einsum('...ik,...jk->...ij', frame, frame)
    det_g = metric[..., 0, 0] * metric[..., 1, 1] - metric[..., 0, 1] * metric[..., 1, 0]
    metric_inv = np.empty_like(metric)
    metric_inv[..., 0, 0] = metric[..., 1, 1] / det_g
    metric_inv[..., 1, 1] = metric[..., 0, 0] / det_g
    metric_inv[..., 0, 1] = -metric[..., 0, 1] / det_g
    metric_inv[..., 1, 0] = -metric[..., 1, 0] / det_g

    cross = np.cross(frame[..., 0, :], frame[..., 1, :])
    sqrt_det_g = np.linalg.norm(cross, axis=-1)
    normal = sigma * cross / sqrt_det_g[..., None]

    second_form = -np.einsum('...ijk,...k->...ij', hessian, normal)
    shape_operator = metric_inv @ second_form
    gauss_curvature = (shape_operator[..., 0, 0] * shape_operator[..., 1, 1]
                       - shape_operator[..., 0, 1] * shape_operator[..., 1, 0])
    mean_trace = shape_operator[..., 0, 0] + shape_operator[..., 1, 1]

    # Gamma^k_ij = g^{kl} <alpha_ij, alpha_l>, stored [..., k, i, j]
    lowered = np.einsum('...ijc,...lc->...lij', hessian, frame)
    christoffel = np.einsum('...kl,...lij->...kij', metric_inv, lowered)

    # <X, Q Y> = det(X, Y, n); lowered matrix M_ij = det(alpha_i, alpha_j, n)
    volume = sigma * sqrt_det_g
    lowered_rotation = np.zeros_like(metric)
    lowered_rotation[..., 0, 1] = volume
    lowered_rotation[..., 1, 0] = -volume
    rotation = metric_inv @ lowered_rotation

    return {
        'metric': metric,
        'metric_inv': metric_inv,
        'sqrt_det_g': sqrt_det_g,
        'det_g': det_g,
        'normal': normal,
        'second_form': second_form,
        'shape_operator': shape_operator,
        'gauss_curvature': gauss_curvature,
        'mean_trace': mean_trace,
        'christoffel': christoffel,
        'rotation': rotation,
    }


def _choose_orientation(data: Dict[str, np.ndarray]) -> int:
    """Pick the normal sign making Pi(alpha_t, alpha_t) positive on the kappa <= 0 side."""
    pi_tt = data['second_form'][..., 0, 0]
    side = data['gauss_curvature'] <= 0
    total = pi_tt[side].sum() if side.any() else pi_tt.sum()
    return 1 if total >= 0 else -1


@functools.lru_cache(maxsize=32)
def periodic_difference(n: int, spacing: float) -> sp.csr_matrix:
    """Fourth-order central first-derivative matrix on a periodic lattice of ``n`` points."""
    nodes = np.arange(n)
    rows = np.repeat(nodes, _CENTRAL_OFFSETS.size)
    cols = ((nodes[:, None] + _CENTRAL_OFFSETS[None, :]) % n).ravel()
    vals = np.tile(_CENTRAL_STENCIL, n) / spacing
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


@functools.lru_cache(maxsize=32)
def band_difference(n_points: int, spacing: float) -> sp.csr_matrix:
    """First-derivative matrix on ``n_points`` nodes of a closed interval.

    Five-point central differences inside and fourth-order one-sided
    closures on the two nodes next to each end, so a composed derivative
    loses at most one order at the edges.
    """
    if n_points < 6:
        raise ValidationError("need at least 6 nodes across the band", field_name='n_s',
                              invalid_value=n_points - 1)
    last = n_points - 1
    rows: List[int] = []
    cols: List[int] = []
    vals: List[float] = []
    for node, stencil in enumerate(_EDGE_STENCILS):
        for j, c in enumerate(stencil):
            rows.extend((node, last - node))
            cols.extend((j, last - j))
            vals.extend((c, -c))
    interior = np.arange(2, last - 1)
    rows.extend(np.repeat(interior, _CENTRAL_OFFSETS.size).tolist())
    cols.extend((interior[:, None] + _CENTRAL_OFFSETS[None, :]).ravel().tolist())
    vals.extend(np.tile(_CENTRAL_STENCIL, interior.size).tolist())
    return sp.csr_matrix((np.asarray(vals) / spacing, (rows, cols)), shape=(n_points, n_points))


@functools.lru_cache(maxsize=32)
def max_parallel_length(spec: BandSpec, samples: int = 257) -> float:
    """Length of the longest parallel ``s = const`` of the band."""
    s = np.linspace(-spec.b0, spec.b1, samples)
    speed = np.linalg.norm(embedding_derivatives(spec, 0.0, s)['frame'][..., 0, :], axis=-1)
    return float(spec.period * np.max(speed))


def _apply_along(matrix: sp.spmatrix, values: np.ndarray, axis: int) -> np.ndarray:
    moved = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    flat = moved.reshape(moved.shape[0], -1)
    out = np.asarray(matrix @ flat).reshape(moved.shape)
    return np.moveaxis(out, 0, axis)


@dataclass(frozen=True, eq=False)
class SurfacePatch:
    """A surface band sampled on its ``n_t x (n_s + 1)`` node lattice.

    Arrays are indexed ``[it, is, ...]``. ``t`` is periodic: the node at
    ``t = a`` is identified with ``t = 0`` and not stored. ``conormal`` and
    ``tangent`` are indexed ``[side, it, :]`` with side 0 at ``s = -b0`` and
    side 1 at ``s = b1``. ``orientation`` is the sign of
    ``det(alpha_t, alpha_s, n)``.
    """

    spec: BandSpec
    t: np.ndarray
    s: np.ndarray
    position: np.ndarray
    frame: np.ndarray
    hessian: np.ndarray
    metric: np.ndarray
    metric_inv: np.ndarray
    sqrt_det_g: np.ndarray
    normal: np.ndarray
    second_form: np.ndarray
    shape_operator: np.ndarray
    gauss_curvature: np.ndarray
    mean_trace: np.ndarray
    christoffel: np.ndarray
    rotation: np.ndarray
    conormal: np.ndarray
    tangent: np.ndarray
    orientation: int

    @property
    def grid_shape(self) -> Tuple[int, int]:
        return self.position.shape[:2]

    @property
    def n_t(self) -> int:
        return self.spec.n_t

    @property
    def n_s(self) -> int:
        return self.spec.n_s

    @property
    def dt(self) -> float:
        return self.spec.period / self.spec.n_t

    @property
    def ds(self) -> float:
        return (self.spec.b0 + self.spec.b1) / self.spec.n_s

    @property
    def s_grid(self) -> np.ndarray:
        return np.broadcast_to(self.s[None, :], self.grid_shape)

    @property
    def t_grid(self) -> np.ndarray:
        return np.broadcast_to(self.t[:, None], self.grid_shape)

    def diff_t(self, values: np.ndarray) -> np.ndarray:
        """Periodic fourth-order central difference along t (axis 0)."""
        return _apply_along(periodic_difference(self.n_t, self.dt), values, 0)

    def diff_s(self, values: np.ndarray) -> np.ndarray:
        """Fourth-order difference along s (axis 1), one-sided at the band edges."""
        return _apply_along(band_difference(self.n_s + 1, self.ds), values, 1)

    def push_forward(self, components: np.ndarray) -> np.ndarray:
        """Ambient 3-vectors ``X^i alpha_i`` from coordinate components."""
        return np.einsum('...i,...ik->...k', components, self.frame)

    def refine(self) -> "SurfacePatch":
        """The same band on a grid with half the spacing in both directions."""
        return build_patch(self.spec.with_grid(2 * self.n_t, 2 * self.n_s))

    def resample(self, n_t: int, n_s: int) -> "SurfacePatch":
        if (n_t, n_s) == (self.n_t, self.n_s):
            return self
        return build_patch(self.spec.with_grid(n_t, n_s))

    def geometry_at(self, t, s) -> Dict[str, np.ndarray]:
        """Pointwise geometry at arbitrary parameters, with this patch's orientation."""
        der = embedding_derivatives(self.spec, t, s)
        data = _fundamental_data(der['frame'], der['hessian'], float(self.orientation))
        data.update(der)
        return data


@handle_numerical_errors(stage="build_patch")
def build_patch(spec: BandSpec) -> SurfacePatch:
    """Sample a band on its grid and cache all pointwise geometry.

    Raises:
        ValidationError: If the band spec violates its invariants
        GeometryError: For a non-positive profile radius, a too coarse grid
            or a degenerate parametrisation
    """
    spec.validate()
    t = np.arange(spec.n_t) * (spec.period / spec.n_t)
    s = np.linspace(-spec.b0, spec.b1, spec.n_s + 1)
    t_grid, s_grid = np.meshgrid(t, s, indexing='ij')

    der = embedding_derivatives(spec, t_grid, s_grid)
    data = _fundamental_data(der['frame'], der['hessian'], 1.0)
    if np.any(data['det_g'] <= 0) or not np.all(np.isfinite(data['det_g'])):
        raise GeometryError("degenerate parametrisation (det g <= 0)", preset=spec.preset)

    orientation = _choose_orientation(data)
    if orientation < 0:
        data = _fundamental_data(der['frame'], der['hessian'], -1.0)

    ends = data['metric_inv'][:, [0, -1]]
    conormal = ends[..., :, 1] / np.sqrt(ends[..., 1, 1])[..., None]
    conormal[:, 0] *= -1.0
    speed = np.sqrt(data['metric'][:, [0, -1], 0, 0])
    tangent = np.zeros_like(conormal)
    tangent[..., 0] = 1.0 / speed

    patch = SurfacePatch(
        spec=spec,
        t=t,
        s=s,
        position=der['position'],
        frame=der['frame'],
        hessian=der['hessian'],
        metric=data['metric'],
        metric_inv=data['metric_inv'],
        sqrt_det_g=data['sqrt_det_g'],
        normal=data['normal'],
        second_form=data['second_form'],
        shape_operator=data['shape_operator'],
        gauss_curvature=data['gauss_curvature'],
        mean_trace=data['mean_trace'],
        christoffel=data['christoffel'],
        rotation=data['rotation'],
        conormal=np.moveaxis(conormal, 1, 0).copy(),
        tangent=np.moveaxis(tangent, 1, 0).copy(),
        orientation=orientation,
    )
    logger.info("Surface patch built", extra={
        'preset': spec.preset, 'n_t': spec.n_t, 'n_s': spec.n_s, 'orientation': orientation,
    })
    return patch


@dataclass
class ConditionResult:
    name: str
    passed: bool
    value: float
    witness: Optional[Tuple[int, int]]
    detail: str


@dataclass
class ValidationReport:
    """Pass/fail of the four curvature conditions with witness nodes."""

    preset: str
    band_type: str
    delta: float
    conditions: List[ConditionResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    @property
    def mixed_type(self) -> bool:
        return all(c.passed for c in self.conditions[:3])

    def condition(self, name: str) -> ConditionResult:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> List[ConditionResult]:
        return [c for c in self.conditions if not c.passed]

    def summary_lines(self) -> List[str]:
        lines = [f"preset: {self.preset}", f"band type: {self.band_type}",
                 f"delta: {self.delta:.6g}"]
        for c in self.conditions:
            status = 'PASS' if c.passed else 'FAIL'
            witness = '' if c.witness is None else f" at node {c.witness}"
            lines.append(f"{c.name}: {status} ({c.detail}; value {c.value:.6g}{witness})")
        if not self.mixed_type:
            lines.append("not mixed type")
        return lines


def _extreme(values: np.ndarray, mask: np.ndarray, largest: bool) -> Tuple[float, Optional[Tuple[int, int]]]:
    if not mask.any():
        return float('nan'), None
    fill = -np.inf if largest else np.inf
    masked = np.where(mask, values, fill)
    flat = np.argmax(masked) if largest else np.argmin(masked)
    node = np.unravel_index(flat, values.shape)
    return float(values[node]), (int(node[0]), int(node[1]))


def validate_curvature_assumptions(patch: SurfacePatch) -> ValidationReport:
    """Check the curvature sign conditions of a mixed-type band.

    Failures are report entries, never exceptions. ``delta`` is one grid cell.
    """
    kappa = patch.gauss_curvature
    s = patch.s_grid
    delta = patch.ds
    reach = delta * (1.0 + 1e-9)
    conditions = []

    value, node = _extreme(kappa, s > reach, largest=False)
    conditions.append(ConditionResult(
        'kappa_positive', node is not None and value > KAPPA_MIN, value, node,
        f"min kappa on s > delta must exceed {KAPPA_MIN:g}" if node is not None else "no nodes with s > delta"))

    value, node = _extreme(kappa, s < -reach, largest=True)
    conditions.append(ConditionResult(
        'kappa_negative', node is not None and value < -KAPPA_MIN, value, node,
        f"max kappa on s < -delta must be below {-KAPPA_MIN:g}" if node is not None else "no nodes with s < -delta"))

    near = np.abs(s) <= reach
    gradient = np.abs(patch.diff_s(kappa))
    bound = 2.0 * float(np.max(gradient[near]))
    size, size_node = _extreme(np.abs(kappa), near, largest=True)
    slope, slope_node = _extreme(gradient, near, largest=False)
    if size > bound * delta:
        conditions.append(ConditionResult(
            'kappa_transition', False, size, size_node,
            f"|kappa| exceeds C*delta = {bound * delta:.6g} near s = 0"))
    else:
        conditions.append(ConditionResult(
            'kappa_transition', slope >= GRADIENT_MIN, slope, slope_node,
            f"min |d kappa/ds| near s = 0 must be at least {GRADIENT_MIN:g}"))

    value, node = _extreme(patch.second_form[..., 0, 0], s <= 1e-12, largest=False)
    conditions.append(ConditionResult(
        'normal_curvature', value >= NORMAL_CURVATURE_MIN, value, node,
        f"min Pi(alpha_t, alpha_t) on s in [-b0, 0] must be at least {NORMAL_CURVATURE_MIN:g}"))

    report = ValidationReport(patch.spec.preset, classify_band(patch), delta, conditions)
    logger.info("Curvature assumptions checked", extra={
        'preset': patch.spec.preset, 'passed': report.passed,
        'failures': [c.name for c in report.failures()],
    })
    return report


def classify_band(patch: SurfacePatch, tol: float = KAPPA_MIN) -> str:
    """``elliptic``, ``hyperbolic``, ``parabolic`` or ``mixed`` from the sign of kappa."""
    kappa = patch.gauss_curvature
    positive = kappa > tol
    negative = kappa < -tol
    if positive.all():
        return 'elliptic'
    if negative.all():
        return 'hyperbolic'
    if not positive.any() and not negative.any():
        return 'parabolic'
    return 'mixed'


def principal_curvatures(patch: SurfacePatch) -> np.ndarray:
    """Eigenvalues of the shape operator, ascending, shape (n_t, n_s+1, 2)."""
    half = 0.5 * patch.mean_trace
    spread = np.sqrt(np.maximum(half * half - patch.gauss_curvature, 0.0))
    return np.stack([half - spread, half + spread], axis=-1)


def focal_distance(patch: SurfacePatch) -> float:
    largest = float(np.max(np.abs(principal_curvatures(patch))))
    return math.inf if largest == 0 else 1.0 / largest


def brioschi_curvature(patch: SurfacePatch) -> np.ndarray:
    """Intrinsic Gaussian curvature from finite differences of E, F, G."""
    E = patch.metric[..., 0, 0]
    F = patch.metric[..., 0, 1]
    G = patch.metric[..., 1, 1]
    E_u, E_v = patch.diff_t(E), patch.diff_s(E)
    F_u, F_v = patch.diff_t(F), patch.diff_s(F)
    G_u, G_v = patch.diff_t(G), patch.diff_s(G)
    E_vv = patch.diff_s(E_v)
    G_uu = patch.diff_t(G_u)
    F_uv = patch.diff_s(F_u)

    first = np.empty(E.shape + (3, 3))
    first[..., 0, :] = np.stack([-0.5 * E_vv + F_uv - 0.5 * G_uu, 0.5 * E_u, F_u - 0.5 * E_v], axis=-1)
    first[..., 1, :] = np.stack([F_v - 0.5 * G_u, E, F], axis=-1)
    first[..., 2, :] = np.stack([0.5 * G_v, F, G], axis=-1)

    second = np.empty_like(first)
    second[..., 0, :] = np.stack([np.zeros_like(E), 0.5 * E_v, 0.5 * G_u], axis=-1)
    second[..., 1, :] = np.stack([0.5 * E_v, E, F], axis=-1)
    second[..., 2, :] = np.stack([0.5 * G_u, F, G], axis=-1)

    denominator = (E * G - F * F) ** 2
    return (np.linalg.det(first) - np.linalg.det(second)) / denominator


def q_apply(patch: SurfacePatch, node: Tuple[int, int], vector) -> np.ndarray:
    """Apply the tangent-plane rotation Q at a node to coordinate components."""
    it, is_ = node
    if not (0 <= it < patch.n_t and 0 <= is_ <= patch.n_s):
        raise ValidationError("node out of range", field_name='node', invalid_value=node)
    vector = np.asarray(vector, dtype=float)
    if vector.shape != (2,):
        raise ValidationError("expected two coordinate components", field_name='vector',
                              invalid_value=vector.shape)
    return patch.rotation[it, is_] @ vector


def geometry_rows(patch: SurfacePatch) -> Iterator[Dict[str, float]]:
    """Rows of the geometry dump, t-major."""
    for it in range(patch.n_t):
        for is_ in range(patch.n_s + 1):
            x, y, z = patch.position[it, is_]
            yield {
                't': float(patch.t[it]),
                's': float(patch.s[is_]),
                'x': float(x),
                'y': float(y),
                'z': float(z),
                'kappa': float(patch.gauss_curvature[it, is_]),
                'trPi': float(patch.mean_trace[it, is_]),
                'Pi_tt': float(patch.second_form[it, is_, 0, 0]),
            }
