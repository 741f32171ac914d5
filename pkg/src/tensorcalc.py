"""Covariant tensor calculus on a sampled surface band.

Fields live on the node lattice of a ``SurfacePatch``. Order-1 fields hold
contravariant components ``W^i``; order-2 fields hold the mixed matrix
``A^i_j`` of an endomorphism of the tangent plane (``U(X, Y) = <A X, Y>``),
so composition with ``Q`` or the shape operator is a matrix product and the
transpose is the metric adjoint ``g^-1 A^T g``.

Partial derivatives come from the patch's finite-difference operators
(fourth-order central stencils, periodic in t and closed by one-sided
stencils at the band edges in s);
the connection terms use the closed-form Christoffel symbols.
"""

import math
import time
import zlib
import functools
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import scipy.integrate

from exceptions import ValidationError
from geometry import SurfacePatch
from logging_config import get_logger, log_stage

logger = get_logger(__name__)

EXACT_THRESHOLD = 1e-10
ALGEBRAIC_TOLERANCE = 1e-12
MIN_ORDER = 1.9

FOURIER_MODES = 4
POLYNOMIAL_DEGREE = 6

IDENTITY_COLUMNS = ['identity_id', 'grid', 'residual', 'order']


@dataclass(frozen=True, eq=False)
class TensorField:
    """An order-0, 1 or 2 tensor field sampled on a patch."""

    patch: SurfacePatch
    order: int
    components: np.ndarray

    def __post_init__(self):
        if self.order not in (0, 1, 2):
            raise ValidationError("order must be 0, 1 or 2", field_name='order',
                                  invalid_value=self.order)
        expected = tuple(self.patch.grid_shape) + (2,) * self.order
        if np.shape(self.components) != expected:
            raise ValidationError(f"order-{self.order} field needs components of shape {expected}",
                                  field_name='components', invalid_value=np.shape(self.components))

    @classmethod
    def zeros(cls, patch: SurfacePatch, order: int) -> "TensorField":
        return cls(patch, order, np.zeros(tuple(patch.grid_shape) + (2,) * order))

    @classmethod
    def identity(cls, patch: SurfacePatch) -> "TensorField":
        return cls(patch, 2, np.broadcast_to(np.eye(2), tuple(patch.grid_shape) + (2, 2)).copy())

    def _like(self, components: np.ndarray) -> "TensorField":
        return TensorField(self.patch, self.order, components)

    def _check(self, other: "TensorField") -> None:
        if other.patch is not self.patch:
            raise ValidationError("fields live on different patches", field_name='patch')
        if other.order != self.order:
            raise ValidationError(f"order mismatch ({self.order} vs {other.order})", field_name='order')

    def __add__(self, other: "TensorField") -> "TensorField":
        self._check(other)
        return self._like(self.components + other.components)

    def __sub__(self, other: "TensorField") -> "TensorField":
        self._check(other)
        return self._like(self.components - other.components)

    def __neg__(self) -> "TensorField":
        return self._like(-self.components)

    def __mul__(self, other: Union[float, "TensorField"]) -> "TensorField":
        if isinstance(other, TensorField):
            if other.order != 0:
                raise ValidationError("only scalar fields multiply pointwise", field_name='order')
            if other.patch is not self.patch:
                raise ValidationError("fields live on different patches", field_name='patch')
            factor = other.components.reshape(other.components.shape + (1,) * self.order)
            return self._like(self.components * factor)
        return self._like(self.components * float(other))

    __rmul__ = __mul__

    def max_norm(self) -> float:
        return float(np.max(pointwise_norm(self).components))


# -- pointwise algebra --------------------------------------------------------

def scalar_field(patch: SurfacePatch, values: np.ndarray) -> TensorField:
    return TensorField(patch, 0, np.asarray(values, dtype=float))


def vector_field(patch: SurfacePatch, components: np.ndarray) -> TensorField:
    return TensorField(patch, 1, np.asarray(components, dtype=float))


def operator_field(patch: SurfacePatch, components: np.ndarray) -> TensorField:
    return TensorField(patch, 2, np.asarray(components, dtype=float))


def rotation_field(patch: SurfacePatch) -> TensorField:
    """Q, the positive quarter turn of each tangent plane."""
    return operator_field(patch, patch.rotation)


def shape_field(patch: SurfacePatch) -> TensorField:
    """The shape operator, i.e. Pi as an endomorphism."""
    return operator_field(patch, patch.shape_operator)


def _adjoint(patch: SurfacePatch, matrices: np.ndarray) -> np.ndarray:
    return patch.metric_inv @ np.swapaxes(matrices, -1, -2) @ patch.metric


def transpose(u: TensorField) -> TensorField:
    """Metric adjoint of an order-2 field."""
    _require(u, 2)
    return u._like(_adjoint(u.patch, u.components))


def sym(u: TensorField) -> TensorField:
    _require(u, 2)
    return u._like(0.5 * (u.components + _adjoint(u.patch, u.components)))


def trace(u: TensorField) -> TensorField:
    _require(u, 2)
    return scalar_field(u.patch, np.trace(u.components, axis1=-2, axis2=-1))


def determinant(u: TensorField) -> TensorField:
    _require(u, 2)
    a = u.components
    return scalar_field(u.patch, a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0])


def compose(left: TensorField, right: TensorField) -> TensorField:
    """``left`` (order 2) applied to ``right`` (order 1 or 2)."""
    _require(left, 2)
    if right.patch is not left.patch:
        raise ValidationError("fields live on different patches", field_name='patch')
    if right.order == 2:
        return right._like(left.components @ right.components)
    if right.order == 1:
        return right._like(np.einsum('...ij,...j->...i', left.components, right.components))
    raise ValidationError("cannot compose with a scalar field", field_name='order')


def rotate(f: TensorField) -> TensorField:
    """Q f for a vector or order-2 field."""
    return compose(rotation_field(f.patch), f)


def rotate_right(u: TensorField) -> TensorField:
    """U Q."""
    return compose(u, rotation_field(u.patch))


def inner(a: TensorField, b: TensorField) -> TensorField:
    """Pointwise metric inner product of two fields of the same order."""
    a._check(b)
    patch = a.patch
    if a.order == 0:
        values = a.components * b.components
    elif a.order == 1:
        values = np.einsum('...ij,...i,...j->...', patch.metric, a.components, b.components)
    else:
        values = np.trace(_adjoint(patch, a.components) @ b.components, axis1=-2, axis2=-1)
    return scalar_field(patch, values)


def pointwise_norm(f: TensorField) -> TensorField:
    if f.order == 0:
        return scalar_field(f.patch, np.abs(f.components))
    return scalar_field(f.patch, np.sqrt(np.maximum(inner(f, f).components, 0.0)))


def lower(w: TensorField) -> np.ndarray:
    """Covariant components g_ij W^j."""
    _require(w, 1)
    return np.einsum('...ij,...j->...i', w.patch.metric, w.components)


def _require(f: TensorField, order: int) -> None:
    if f.order != order:
        raise ValidationError(f"expected an order-{order} field, got order {f.order}",
                              field_name='order', invalid_value=f.order)


# -- derivatives --------------------------------------------------------------

def partials(patch: SurfacePatch, values: np.ndarray) -> np.ndarray:
    """Coordinate partials; the derivative index is appended as the last axis."""
    return np.stack([patch.diff_t(values), patch.diff_s(values)], axis=-1)


def jacobian(w: TensorField) -> TensorField:
    """J with J X = D_X W, i.e. J^i_k = d_k W^i + Gamma^i_kl W^l."""
    _require(w, 1)
    patch = w.patch
    connection = np.einsum('...ikl,...l->...ik', patch.christoffel, w.components)
    return operator_field(patch, partials(patch, w.components) + connection)


def covariant_derivative(f: TensorField) -> TensorField:
    """Df for a scalar (the gradient) or a vector field.

    For a vector field the result is DW with DW(Y, X) = <D_X W, Y>, stored as
    the adjoint of the Jacobian.

    Raises:
        ValidationError: For order-2 input, which is unsupported
    """
    patch = f.patch
    if f.order == 0:
        return vector_field(patch, np.einsum('...ij,...j->...i', patch.metric_inv,
                                             partials(patch, f.components)))
    if f.order == 1:
        return transpose(jacobian(f))
    raise ValidationError("covariant derivative of an order-2 field is unsupported",
                          field_name='order', invalid_value=f.order)


def divergence(f: TensorField) -> TensorField:
    """div W = tr(D W) for vectors; (div A)_i = nabla_k A^k_i for order-2 fields.

    The order-2 result is raised to a contravariant vector.
    """
    patch = f.patch
    gamma = patch.christoffel
    contracted = np.einsum('...kkl->...l', gamma)
    if f.order == 1:
        d = partials(patch, f.components)
        values = np.einsum('...kk->...', d) + np.einsum('...l,...l->...', contracted, f.components)
        return scalar_field(patch, values)
    if f.order == 2:
        a = f.components
        d = partials(patch, a)
        covector = (np.einsum('...kik->...i', d)
                    + np.einsum('...l,...li->...i', contracted, a)
                    - np.einsum('...lki,...kl->...i', gamma, a))
        return vector_field(patch, np.einsum('...ij,...j->...i', patch.metric_inv, covector))
    raise ValidationError("divergence needs an order-1 or order-2 field", field_name='order',
                          invalid_value=f.order)


def ambient_partials(patch: SurfacePatch, y: np.ndarray) -> np.ndarray:
    """Partials of an ambient vector field, shape (..., 3, 2)."""
    return partials(patch, y)


def directional(patch: SurfacePatch, y: np.ndarray, x: TensorField) -> np.ndarray:
    """The ambient derivative of ``y`` along the tangent field ``x``."""
    return np.einsum('...ck,...k->...c', ambient_partials(patch, y), x.components)


# -- quadrature ---------------------------------------------------------------

@functools.lru_cache(maxsize=32)
def _simpson_weights(n_points: int, spacing: float) -> np.ndarray:
    weights = scipy.integrate.simpson(np.eye(n_points), dx=spacing, axis=1)
    weights.setflags(write=False)
    return weights


def quadrature_weights(patch: SurfacePatch) -> np.ndarray:
    """Area weights: trapezoid in t, Simpson in s, times sqrt(det g)."""
    ws = _simpson_weights(patch.n_s + 1, patch.ds)
    return patch.dt * ws[None, :] * patch.sqrt_det_g


def integrate(patch: SurfacePatch, values: Union[np.ndarray, TensorField]) -> float:
    if isinstance(values, TensorField):
        _require(values, 0)
        values = values.components
    return float(np.sum(quadrature_weights(patch) * values))


def l2_norm(f: TensorField) -> float:
    return math.sqrt(max(integrate(f.patch, inner(f, f)), 0.0))


def boundary_speed(patch: SurfacePatch) -> np.ndarray:
    """|alpha_t| on both boundary circles, shape (2, n_t)."""
    return np.sqrt(np.moveaxis(patch.metric[:, [0, -1], 0, 0], 1, 0))


def boundary_values(values: np.ndarray) -> np.ndarray:
    """Node values on both boundary circles with the side index first."""
    return np.moveaxis(np.asarray(values)[:, [0, -1]], 1, 0)


def boundary_integral(patch: SurfacePatch, values: np.ndarray) -> float:
    """Trapezoid rule of boundary values (2, n_t) against arc length on both circles."""
    return float(np.sum(values * boundary_speed(patch)) * patch.dt)


def boundary_flux(w: TensorField) -> float:
    """The integral of <W, nu> over both boundary circles."""
    _require(w, 1)
    patch = w.patch
    metric = boundary_values(patch.metric)
    comps = boundary_values(w.components)
    normal_part = np.einsum('...ij,...i,...j->...', metric, comps, patch.conormal)
    return boundary_integral(patch, normal_part)


def boundary_l2_norm(w: TensorField) -> float:
    """L2 norm of a vector field over both boundary circles."""
    _require(w, 1)
    values = boundary_values(inner(w, w).components)
    return math.sqrt(max(boundary_integral(w.patch, values), 0.0))


# -- seeded smooth fields -----------------------------------------------------

def named_rng(seed: int, name: str) -> np.random.Generator:
    """Generator for a named stream under a run seed."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(zlib.crc32(name.encode()),)))


def smooth_values(patch: SurfacePatch, seed: int, name: str) -> np.ndarray:
    """Random smooth scalar: Fourier modes |k| <= 4 in t times degree <= 6 in s.

    Coefficients are Uniform(-1, 1) and do not depend on the grid, so the same
    (seed, name) gives the same function on every resolution.
    """
    rng = named_rng(seed, name)
    coeffs = rng.uniform(-1.0, 1.0, size=(2, FOURIER_MODES + 1, POLYNOMIAL_DEGREE + 1))
    spec = patch.spec
    theta = spec.wavenumber * patch.t
    modes = np.arange(FOURIER_MODES + 1)
    s_hat = (2.0 * patch.s - (spec.b1 - spec.b0)) / (spec.b0 + spec.b1)
    powers = s_hat[:, None] ** np.arange(POLYNOMIAL_DEGREE + 1)
    cos = np.cos(np.outer(theta, modes))
    sin = np.sin(np.outer(theta, modes))
    return (cos @ coeffs[0] + sin @ coeffs[1]) @ powers.T


def random_scalar(patch: SurfacePatch, seed: int, name: str) -> TensorField:
    return scalar_field(patch, smooth_values(patch, seed, name))


def random_vector(patch: SurfacePatch, seed: int, name: str) -> TensorField:
    return vector_field(patch, np.stack([smooth_values(patch, seed, f"{name}/{i}") for i in range(2)], axis=-1))


def random_operator(patch: SurfacePatch, seed: int, name: str) -> TensorField:
    comps = np.stack([smooth_values(patch, seed, f"{name}/{i}") for i in range(4)], axis=-1)
    return operator_field(patch, comps.reshape(tuple(patch.grid_shape) + (2, 2)))


def random_ambient(patch: SurfacePatch, seed: int, name: str) -> np.ndarray:
    return np.stack([smooth_values(patch, seed, f"{name}/{c}") for c in range(3)], axis=-1)


def band_cutoff(patch: SurfacePatch) -> np.ndarray:
    """(s + b0)^2 (b1 - s)^2 normalised to peak 1; zero on both edges."""
    spec = patch.spec
    s = patch.s_grid
    peak = (0.5 * (spec.b0 + spec.b1)) ** 4
    return (s + spec.b0) ** 2 * (spec.b1 - s) ** 2 / peak


# -- residual reports ---------------------------------------------------------

@dataclass
class ResidualRow:
    identity_id: str
    kind: str
    grid: int
    residual: float
    order: Optional[float] = None
    exact: bool = False
    passed: bool = True

    @property
    def order_label(self) -> str:
        if self.exact:
            return 'exact'
        if self.order is None:
            return ''
        return f"{self.order:.4f}"

    def as_csv_row(self) -> Dict[str, object]:
        return {'identity_id': self.identity_id, 'grid': self.grid,
                'residual': self.residual, 'order': self.order_label}


@dataclass
class ResidualReport:
    """Residuals of named identities at a coarse and a fine grid."""

    rows: List[ResidualRow] = field(default_factory=list)
    seed: Optional[int] = None
    preset: Optional[str] = None

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)

    def identities(self) -> List[str]:
        seen: List[str] = []
        for row in self.rows:
            if row.identity_id not in seen:
                seen.append(row.identity_id)
        return seen

    def rows_for(self, identity_id: str) -> List[ResidualRow]:
        return [row for row in self.rows if row.identity_id == identity_id]

    def verdict(self, identity_id: str) -> ResidualRow:
        """The fine-grid row, which carries the order and the pass flag."""
        return self.rows_for(identity_id)[-1]

    def first_failure(self) -> Optional[str]:
        for row in self.rows:
            if not row.passed:
                return row.identity_id
        return None

    def extend(self, other: "ResidualReport") -> None:
        self.rows.extend(other.rows)


def observed_order(coarse: float, fine: float, coarse_grid: int, fine_grid: int) -> float:
    """Observed convergence order between two grids."""
    if fine <= 0.0:
        return math.inf
    if coarse <= 0.0:
        return -math.inf
    return math.log(coarse / fine) / math.log(fine_grid / coarse_grid)


def convergence_rows(identity_id: str, kind: str, grids: Tuple[int, int],
                     residuals: Tuple[float, float]) -> List[ResidualRow]:
    """Classify a residual pair.

    Algebraic identities pass when both residuals are within 1e-12.
    Differential identities pass with an observed order of at least 1.9 or
    when the fine residual is at round-off level (reported as exact).
    """
    (coarse_grid, fine_grid), (coarse, fine) = grids, residuals
    if kind == 'algebraic':
        passed = max(coarse, fine) <= ALGEBRAIC_TOLERANCE
        return [ResidualRow(identity_id, kind, coarse_grid, coarse, None, True, passed),
                ResidualRow(identity_id, kind, fine_grid, fine, None, True, passed)]

    exact = fine <= EXACT_THRESHOLD
    order = observed_order(coarse, fine, coarse_grid, fine_grid)
    passed = exact or order >= MIN_ORDER
    return [ResidualRow(identity_id, kind, coarse_grid, coarse, None, False, True),
            ResidualRow(identity_id, kind, fine_grid, fine, None if exact else order, exact, passed)]


# -- identity battery ---------------------------------------------------------

def _relative(difference: np.ndarray, *terms: np.ndarray) -> float:
    scale = max([1.0] + [float(np.max(np.abs(t))) for t in terms])
    return float(np.max(np.abs(difference))) / scale


def _pointwise_random(patch: SurfacePatch, seed: int, name: str, shape: Tuple[int, ...]) -> np.ndarray:
    return named_rng(seed, f"pointwise/{name}/{patch.n_t}x{patch.n_s}").uniform(
        -1.0, 1.0, size=tuple(patch.grid_shape) + shape)


def _rotation_algebra(patch: SurfacePatch, seed: int) -> float:
    x = _pointwise_random(patch, seed, 'x', (2,))
    y = _pointwise_random(patch, seed, 'y', (2,))
    q = patch.rotation
    g = patch.metric
    qy = np.einsum('...ij,...j->...i', q, y)
    qx = np.einsum('...ij,...j->...i', q, x)
    lhs = np.einsum('...ij,...i,...j->...', g, x, qy)
    volume = np.einsum('...k,...k->...', np.cross(patch.push_forward(x), patch.push_forward(y)), patch.normal)
    eye = np.eye(2)
    return max(
        _relative(lhs - volume, lhs, volume),
        _relative(_adjoint(patch, q) + q, q),
        _relative(q @ q + eye, q @ q),
        _relative(np.einsum('...ij,...i,...j->...', g, qx, qy) - np.einsum('...ij,...i,...j->...', g, x, y), g),
    )


def _trace_rotation(patch: SurfacePatch, seed: int) -> float:
    u = _pointwise_random(patch, seed, 'u', (2, 2))
    q = patch.rotation
    tr = np.trace(u, axis1=-2, axis2=-1)[..., None, None]
    lhs = u @ q + q @ _adjoint(patch, u)
    return _relative(lhs - tr * q, lhs, tr * q)


def _rotation_conjugate(patch: SurfacePatch, seed: int) -> float:
    raw = _pointwise_random(patch, seed, 'u', (2, 2))
    q = patch.rotation
    eye = np.eye(2)
    symmetric = 0.5 * (raw + _adjoint(patch, raw))
    tr_sym = np.trace(symmetric, axis1=-2, axis2=-1)[..., None, None]
    tr_raw = np.trace(raw, axis1=-2, axis2=-1)[..., None, None]
    sym_lhs = symmetric - tr_sym * eye
    sym_rhs = q @ symmetric @ q
    gen_lhs = raw - tr_raw * eye
    gen_rhs = q @ _adjoint(patch, raw) @ q
    return max(_relative(sym_lhs - sym_rhs, sym_lhs, sym_rhs),
               _relative(gen_lhs - gen_rhs, gen_lhs, gen_rhs))


def _shape_rotation_sandwich(patch: SurfacePatch, seed: int) -> float:
    s = patch.shape_operator
    q = patch.rotation
    lhs = s @ q @ s
    rhs = patch.gauss_curvature[..., None, None] * q
    return _relative(lhs - rhs, lhs, rhs)


def _shape_rotation_transpose(patch: SurfacePatch, seed: int) -> float:
    qs = patch.rotation @ patch.shape_operator
    rhs = patch.mean_trace[..., None, None] * patch.rotation
    lhs = qs - _adjoint(patch, qs)
    return _relative(lhs - rhs, lhs, rhs)


def _metric_compatibility(patch: SurfacePatch, seed: int) -> float:
    g = patch.metric
    gamma = patch.christoffel
    dg = partials(patch, g)
    connection = (np.einsum('...lki,...lj->...ijk', gamma, g)
                  + np.einsum('...lkj,...il->...ijk', gamma, g))
    return float(np.max(np.abs(dg - connection)))


def _index_lowering(patch: SurfacePatch, seed: int) -> float:
    w = random_vector(patch, seed, 'lowering/W')
    omega = lower(w)
    via_covector = partials(patch, omega) - np.einsum('...lki,...l->...ik', patch.christoffel, omega)
    via_vector = patch.metric @ jacobian(w).components
    return float(np.max(np.abs(via_covector - via_vector)))


def _product_rule_scalar(patch: SurfacePatch, seed: int) -> float:
    w = random_scalar(patch, seed, 'scalar/w')
    r = random_operator(patch, seed, 'scalar/R')
    lhs = divergence(r * w)
    rhs = compose(transpose(r), covariant_derivative(w)) + divergence(r) * w
    return (lhs - rhs).max_norm()


def _product_rule_vector(patch: SurfacePatch, seed: int) -> float:
    w = random_vector(patch, seed, 'vector/W')
    r = random_operator(patch, seed, 'vector/R')
    lhs = divergence(compose(r, w))
    rhs = inner(r, covariant_derivative(w)) + inner(divergence(r), w)
    return (lhs - rhs).max_norm()


def _product_rule_symmetric(patch: SurfacePatch, seed: int) -> float:
    z = random_vector(patch, seed, 'symmetric/Z')
    p = sym(random_operator(patch, seed, 'symmetric/P'))
    lhs = divergence(compose(p, z))
    rhs = inner(p, covariant_derivative(z)) + inner(divergence(p), z)
    return (lhs - rhs).max_norm()


def _symmetric_gradient_divergence(patch: SurfacePatch, seed: int) -> float:
    z = random_vector(patch, seed, 'sym_gradient/Z')
    kappa = scalar_field(patch, patch.gauss_curvature)
    lhs = divergence(sym(covariant_derivative(z)))
    rhs = (covariant_derivative(divergence(z)) + z * kappa
           - 0.5 * rotate(covariant_derivative(divergence(rotate(z)))))
    return (lhs - rhs).max_norm()


def _rotated_gradient_divergence_free(patch: SurfacePatch, seed: int) -> float:
    z = random_scalar(patch, seed, 'rotated_gradient/z')
    return divergence(rotate(covariant_derivative(z))).max_norm()


def _identity_divergence(patch: SurfacePatch, seed: int) -> float:
    z = random_scalar(patch, seed, 'identity/z')
    return (divergence(TensorField.identity(patch) * z) - covariant_derivative(z)).max_norm()


def _divergence_theorem(patch: SurfacePatch, seed: int) -> float:
    w = random_vector(patch, seed, 'divergence_theorem/W')
    return abs(integrate(patch, divergence(w)) - boundary_flux(w))


def _integration_by_parts(patch: SurfacePatch, seed: int) -> float:
    y = random_ambient(patch, seed, 'by_parts/y')
    big_y = random_ambient(patch, seed, 'by_parts/Y') * band_cutoff(patch)[..., None]
    x = random_vector(patch, seed, 'by_parts/X')
    div_x = divergence(x).components[..., None]
    integrand = (np.einsum('...c,...c->...', directional(patch, y, x), big_y)
                 + np.einsum('...c,...c->...', y, div_x * big_y + directional(patch, big_y, x)))
    return abs(integrate(patch, integrand))


ALGEBRAIC_IDENTITIES: List[Tuple[str, Callable[[SurfacePatch, int], float]]] = [
    ('rotation_algebra', _rotation_algebra),
    ('trace_rotation', _trace_rotation),
    ('rotation_conjugate', _rotation_conjugate),
    ('shape_rotation_sandwich', _shape_rotation_sandwich),
    ('shape_rotation_transpose', _shape_rotation_transpose),
]

DIFFERENTIAL_IDENTITIES: List[Tuple[str, Callable[[SurfacePatch, int], float]]] = [
    ('metric_compatibility', _metric_compatibility),
    ('index_lowering', _index_lowering),
    ('product_rule_scalar', _product_rule_scalar),
    ('product_rule_vector', _product_rule_vector),
    ('product_rule_symmetric', _product_rule_symmetric),
    ('symmetric_gradient_divergence', _symmetric_gradient_divergence),
    ('rotated_gradient_divergence_free', _rotated_gradient_divergence_free),
    ('identity_divergence', _identity_divergence),
    ('divergence_theorem', _divergence_theorem),
    ('integration_by_parts', _integration_by_parts),
]

IDENTITY_IDS = [name for name, _ in ALGEBRAIC_IDENTITIES + DIFFERENTIAL_IDENTITIES]


def identity_suite(patch: SurfacePatch, seed: int = 1,
                   fine: Optional[SurfacePatch] = None) -> ResidualReport:
    """Evaluate every identity on ``patch`` and a finer patch of the same band.

    Args:
        patch: Coarse patch
        seed: Seed of the random smooth fields
        fine: Finer patch; defaults to ``patch.refine()``

    Returns:
        ResidualReport with two rows per identity, algebraic identities first
    """
    start = time.perf_counter()
    fine = fine if fine is not None else patch.refine()
    grids = (patch.n_s, fine.n_s)
    report = ResidualReport(seed=seed, preset=patch.spec.preset)

    for kind, battery in (('algebraic', ALGEBRAIC_IDENTITIES), ('differential', DIFFERENTIAL_IDENTITIES)):
        for identity_id, evaluate in battery:
            residuals = (evaluate(patch, seed), evaluate(fine, seed))
            report.rows.extend(convergence_rows(identity_id, kind, grids, residuals))

    failure = report.first_failure()
    if failure:
        logger.warning("Identity check failed", extra={'identity_id': failure, 'grids': grids})
    log_stage('identity_suite', {'preset': patch.spec.preset, 'grids': grids, 'seed': seed},
              time.perf_counter() - start)
    return report
