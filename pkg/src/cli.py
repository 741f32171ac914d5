"""Command-line entry point.

Subcommands::

    validate-surface   check the curvature conditions of a band
    dump-geometry      write the sampled geometry to geometry.csv
    identities         residual/convergence study of the calculus identities
    strain-check       strain-system residuals and ratio monitors
    korn-sweep         smallest Korn eigenvalue against shell thickness

Every subcommand reads the same TOML configuration; flags override the file
and the file overrides the preset defaults. Exit codes: 0 pass, 1 check
failure, 2 usage or configuration error, 3 numerical failure.
"""

import os
import sys
import math
import time
import argparse
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from error_handlers import ErrorHandler, error_summary
from exceptions import (
    CheckFailure,
    DegenerateSampleError,
    FocalBoundError,
    GeometryError,
    NumericalError,
    ValidationError,
)
from eigensolve import fit_exponent, smallest_eig
from geometry import (
    EXPONENT_WINDOWS,
    GEOMETRY_COLUMNS,
    REFERENCE_EXPONENTS,
    BandSpec,
    build_patch,
    classify_band,
    SurfacePatch,
    focal_distance,
    geometry_rows,
    max_parallel_length,
    validate_curvature_assumptions,
)
from logging_config import get_logger, set_run_id
from shellfem import FOCAL_MARGIN, assemble_forms, build_shell_mesh, matrix_exports
from strain import RESIDUAL_NAMES, STRAIN_COLUMNS, StrainSample, monitor_samples, sample_family
from tensorcalc import IDENTITY_COLUMNS, ResidualReport, convergence_rows, identity_suite
from utils import config_hash, load_config, merge_config, write_csv

logger = get_logger(__name__)

SWEEP_COLUMNS = ['h', 'n_t', 'n_s', 'n_xi', 'lambda_min', 'residual', 'iterations', 'status']
CROSS_CHECK_N_XI = 4
RATIO_DRIFT = 0.5
RATIO_OUTLIER = 10.0


# -- korn sweep ---------------------------------------------------------------

@dataclass
class SweepConfig:
    """Everything a thickness sweep needs."""

    spec: BandSpec
    thicknesses: List[float]
    n_xi: int = 2
    tol: float = 1e-8
    max_iter: int = 5000
    block: int = 2
    seed: int = 1
    min_n_s: int = 32
    cross_check: bool = False
    single_thread: bool = False
    export_matrices: bool = False
    out: Optional[str] = None

    @classmethod
    def from_config(cls, config: Mapping[str, Mapping[str, Any]]) -> "SweepConfig":
        sweep, eig, run = config['sweep'], config['eigensolver'], config['run']
        return cls(
            spec=BandSpec.from_config(config['surface']),
            thicknesses=[float(h) for h in sweep['thicknesses']],
            n_xi=int(sweep['n_xi']),
            tol=float(eig['tol']),
            max_iter=int(eig['max_iter']),
            block=int(eig['block']),
            seed=int(run['seed']),
            min_n_s=int(sweep['min_n_s']),
            cross_check=bool(sweep['cross_check']),
            single_thread=bool(run['single_thread']),
            export_matrices=bool(sweep['export_matrices']),
            out=run['out'],
        )

    def validate(self, patch: Optional[SurfacePatch] = None) -> "SweepConfig":
        """Check the thickness list and layer count; ``patch`` defaults to the band at its spec grid."""
        if len(self.thicknesses) < 3:
            raise ValidationError("need at least 3 thicknesses for the exponent fit",
                                  field_name='thicknesses', invalid_value=self.thicknesses)
        if any(h <= 0 for h in self.thicknesses):
            raise ValidationError("thicknesses must be positive", field_name='thicknesses',
                                  invalid_value=self.thicknesses)
        if any(a <= b for a, b in zip(self.thicknesses, self.thicknesses[1:])):
            raise ValidationError("thicknesses must be strictly decreasing",
                                  field_name='thicknesses', invalid_value=self.thicknesses)
        if self.n_xi < 2:
            raise ValidationError("need at least two layers through the thickness",
                                  field_name='n_xi', invalid_value=self.n_xi)
        patch = patch if patch is not None else build_patch(self.spec)
        limit = FOCAL_MARGIN * focal_distance(patch)
        if self.thicknesses[0] >= limit:
            raise ValidationError(f"thickness {self.thicknesses[0]:g} exceeds the focal bound {limit:.6g}",
                                  field_name='thicknesses', invalid_value=self.thicknesses)
        return self

    def resolution(self, h: float) -> Tuple[int, int]:
        """(n_t, n_s) resolving a boundary layer of width h^(2/3).

        n_t is at least 2 n_s and large enough that the spacing along the
        longest parallel does not exceed the spacing across the band.
        """
        width = self.spec.b0 + self.spec.b1
        n_s = max(self.min_n_s, math.ceil(3.0 * width / h ** (2.0 / 3.0)))
        along = math.ceil(max_parallel_length(self.spec) * n_s / (2.0 * width))
        return max(2 * n_s, 2 * along), n_s


@dataclass
class SweepRow:
    h: float
    n_t: int
    n_s: int
    n_xi: int
    lambda_min: Optional[float]
    residual: Optional[float]
    iterations: int
    seconds: float
    status: str

    def as_csv_row(self) -> Dict[str, Any]:
        return {'h': self.h, 'n_t': self.n_t, 'n_s': self.n_s, 'n_xi': self.n_xi,
                'lambda_min': self.lambda_min, 'residual': self.residual,
                'iterations': self.iterations, 'status': self.status}


@dataclass
class SweepResult:
    preset: str
    band_type: str
    rows: List[SweepRow]
    slope: Optional[float] = None
    intercept: Optional[float] = None
    stderr: Optional[float] = None
    cross_rows: List[SweepRow] = field(default_factory=list)
    cross_slope: Optional[float] = None
    config_hash: str = ''

    @property
    def reference_exponent(self) -> float:
        return REFERENCE_EXPONENTS[self.band_type]

    @property
    def window(self) -> Tuple[float, float]:
        return EXPONENT_WINDOWS[self.band_type]

    @property
    def all_converged(self) -> bool:
        return all(row.status != 'not_converged' for row in self.rows + self.cross_rows)

    @property
    def in_window(self) -> bool:
        low, high = self.window
        return self.slope is not None and low <= self.slope <= high

    @property
    def trend_ok(self) -> Optional[bool]:
        """Whether the finer through-thickness run lands no farther from the reference."""
        if self.slope is None or self.cross_slope is None:
            return None
        target = self.reference_exponent
        return abs(self.cross_slope - target) <= abs(self.slope - target)

    @property
    def passed(self) -> bool:
        return self.all_converged and self.in_window and self.trend_ok is not False


def _sweep_point(config: SweepConfig, h: float, n_xi: int) -> SweepRow:
    start = time.perf_counter()
    n_t, n_s = config.resolution(h)
    try:
        patch = build_patch(config.spec.with_grid(n_t, n_s))
        mesh = build_shell_mesh(patch, h, n_xi=n_xi)
    except FocalBoundError as e:
        logger.warning("Thickness skipped", extra={'h': h, 'error': str(e)})
        return SweepRow(h, n_t, n_s, n_xi, None, None, 0, time.perf_counter() - start,
                        'focal_violation')

    forms = assemble_forms(mesh, single_thread=True)
    if config.export_matrices and config.out:
        matrix_exports(forms, os.path.join(config.out, 'matrices'), f"h{h:g}_nxi{n_xi}")
    report = smallest_eig(forms.A, forms.B, tol=config.tol, max_iter=config.max_iter,
                          seed=config.seed, block=config.block)
    if not report.monotone or not 0.0 < report.eigenvalue <= 1.0 + config.tol:
        logger.warning("Korn eigenvalue outside (0, 1] or non-monotone iteration", extra={
            'h': h, 'lambda_min': report.eigenvalue, 'monotone': report.monotone,
        })
    status = 'ok' if report.converged else 'not_converged'
    return SweepRow(h, n_t, n_s, n_xi, report.eigenvalue, report.residual, report.iterations,
                    time.perf_counter() - start, status)


def _sweep_rows(config: SweepConfig, n_xi: int) -> List[SweepRow]:
    if config.single_thread:
        return [_sweep_point(config, h, n_xi) for h in config.thicknesses]
    with ThreadPoolExecutor() as pool:
        return list(pool.map(lambda h: _sweep_point(config, h, n_xi), config.thicknesses))


def _fit(rows: Sequence[SweepRow]) -> Tuple[Optional[float], Optional[float], Optional[float]]:
    if any(row.status == 'not_converged' for row in rows):
        return None, None, None
    points = [(row.h, row.lambda_min) for row in rows if row.status == 'ok']
    if len(points) < 3:
        return None, None, None
    fit = fit_exponent(points)
    return fit.slope, fit.intercept, fit.stderr


def run_korn_sweep(config: SweepConfig) -> SweepResult:
    """Smallest Korn eigenvalue for each thickness and the fitted exponent.

    Rows are returned in configured thickness order. A focal-bound violation
    skips that thickness; a non-converged eigensolve leaves the fit empty.

    Raises:
        GeometryError: If the mixed-type band fails its curvature conditions
    """
    patch = build_patch(config.spec)
    config.validate(patch)
    if config.spec.preset == 'mixed_inflection':
        report = validate_curvature_assumptions(patch)
        if not report.passed:
            failed = ', '.join(c.name for c in report.failures())
            raise GeometryError(f"band fails its curvature conditions: {failed}",
                                preset=config.spec.preset)

    result = SweepResult(config.spec.preset, classify_band(patch), _sweep_rows(config, config.n_xi))
    result.slope, result.intercept, result.stderr = _fit(result.rows)
    if config.cross_check:
        result.cross_rows = _sweep_rows(config, CROSS_CHECK_N_XI)
        result.cross_slope = _fit(result.cross_rows)[0]

    logger.info("Korn sweep finished", extra={
        'preset': result.preset, 'band_type': result.band_type, 'slope': result.slope,
        'stderr': result.stderr, 'cross_slope': result.cross_slope,
    })
    return result


# -- identities and strain monitors -------------------------------------------

def _grid_pairs(grids: Sequence[int]) -> List[Tuple[int, int]]:
    ordered = sorted(set(int(g) for g in grids))
    if len(ordered) < 2:
        raise ValidationError("need ≥ 2 grids for order estimate", field_name='grids',
                              invalid_value=list(grids))
    return list(zip(ordered, ordered[1:]))


def run_identities(spec: BandSpec, grids: Sequence[int], seed: int = 1) -> ResidualReport:
    """Identity residuals for each consecutive pair of grids."""
    pairs = _grid_pairs(grids)
    patches = {}
    for grid in sorted({g for pair in pairs for g in pair}):
        patches[grid] = build_patch(spec.with_grid(grid))
    report = ResidualReport(seed=seed, preset=spec.preset)
    for coarse, fine in pairs:
        report.extend(identity_suite(patches[coarse], seed, fine=patches[fine]))
    return report


@dataclass
class StabilityCheck:
    name: str
    passed: bool
    coarse_max: float
    fine_max: float
    detail: str = ''


@dataclass
class StrainCheckResult:
    samples: List[StrainSample]
    residuals: ResidualReport
    checks: List[StabilityCheck]

    @property
    def passed(self) -> bool:
        return self.residuals.passed and all(c.passed for c in self.checks)

    def first_failure(self) -> Optional[str]:
        failure = self.residuals.first_failure()
        if failure:
            return failure
        for check in self.checks:
            if not check.passed:
                return check.name
        return None


def _stability(name: str, coarse: Sequence[float], fine: Sequence[float]) -> StabilityCheck:
    coarse_max, fine_max = max(coarse), max(fine)
    drift = abs(fine_max - coarse_max) <= RATIO_DRIFT * coarse_max
    outliers = [v for v in fine if v > RATIO_OUTLIER * coarse_max]
    detail = (f"max {coarse_max:.6g} -> {fine_max:.6g}"
              + (f"; {len(outliers)} samples above {RATIO_OUTLIER:g}x the coarse max" if outliers else ''))
    return StabilityCheck(name, drift and not outliers, coarse_max, fine_max, detail)


def run_strain_check(spec: BandSpec, grids: Sequence[int], samples: int = 50, seed: int = 1,
                     family: str = 'random', single_thread: bool = False) -> StrainCheckResult:
    """Strain-system residual orders and ratio stability between two grids.

    The rigid family reports only the first ratio.

    Raises:
        ValidationError: For ``samples < 1`` or fewer than two grids
        CheckFailure: If a ratio denominator vanishes under a non-zero numerator
    """
    if samples < 1:
        raise ValidationError("need at least one sample", field_name='samples', invalid_value=samples)
    coarse_grid, fine_grid = _grid_pairs(grids)[0]
    patches = [build_patch(spec.with_grid(coarse_grid)), build_patch(spec.with_grid(fine_grid))]
    sources = sample_family(family, samples, seed)
    with_thm12 = family == 'random'
    try:
        results = monitor_samples(patches, sources, clamp_for_thm12=with_thm12,
                                  max_workers=1 if single_thread else None)
    except DegenerateSampleError as e:
        if e.kind == 'counterexample':
            raise CheckFailure(str(e), check_name='ratio_denominator') from e
        raise

    coarse = results[:len(sources)]
    fine = results[len(sources):]
    report = ResidualReport(seed=seed, preset=spec.preset)
    for c, f in zip(coarse, fine):
        for name in RESIDUAL_NAMES:
            report.rows.extend(convergence_rows(f"{name}[{c.sample_id}]", 'differential',
                                                (coarse_grid, fine_grid),
                                                (c.residuals[name], f.residuals[name])))

    checks = [_stability('thm11_ratio', [c.thm11_ratio for c in coarse], [f.thm11_ratio for f in fine])]
    if with_thm12:
        checks.append(_stability('thm12_ratio', [c.thm12_ratio for c in coarse],
                                 [f.thm12_ratio for f in fine]))
    result = StrainCheckResult(results, report, checks)
    logger.info("Strain check finished", extra={
        'preset': spec.preset, 'family': family, 'samples': len(sources),
        'passed': result.passed, 'first_failure': result.first_failure(),
    })
    return result


# -- output helpers -----------------------------------------------------------

def _with_hash(rows, digest: str):
    for row in rows:
        row = dict(row)
        row['config_hash'] = digest
        yield row


def _write_report(out: str, digest: str, command: str, lines: Sequence[str]) -> str:
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, 'report.txt')
    with open(path, 'w') as f:
        f.write(f"config_hash: {digest}\n")
        f.write(f"command: {command}\n")
        for line in lines:
            f.write(f"{line}\n")
    return path


def _sweep_lines(rows: Sequence[SweepRow]) -> List[str]:
    lines = []
    for row in rows:
        lam = '-' if row.lambda_min is None else f"{row.lambda_min:.10e}"
        res = '-' if row.residual is None else f"{row.residual:.3e}"
        lines.append(f"h={row.h:g} n_t={row.n_t} n_s={row.n_s} n_xi={row.n_xi} lambda_min={lam} "
                     f"residual={res} iterations={row.iterations} seconds={row.seconds:.2f} "
                     f"status={row.status}")
    return lines


# -- subcommands --------------------------------------------------------------

def _cmd_validate_surface(config: Dict[str, Any], digest: str) -> None:
    patch = build_patch(BandSpec.from_config(config['surface']))
    report = validate_curvature_assumptions(patch)
    lines = report.summary_lines()
    for line in lines:
        print(line)
    _write_report(config['run']['out'], digest, 'validate-surface', lines)
    if not report.passed:
        raise CheckFailure(', '.join(c.name for c in report.failures()), check_name='curvature')


def _cmd_dump_geometry(config: Dict[str, Any], digest: str) -> None:
    patch = build_patch(BandSpec.from_config(config['surface']))
    path = write_csv(os.path.join(config['run']['out'], 'geometry.csv'),
                     GEOMETRY_COLUMNS + ['config_hash'], _with_hash(geometry_rows(patch), digest))
    print(path)


def _cmd_identities(config: Dict[str, Any], digest: str) -> None:
    run = config['run']
    report = run_identities(BandSpec.from_config(config['surface']), run['grids'], run['seed'])
    out = run['out']
    write_csv(os.path.join(out, 'identities.csv'), IDENTITY_COLUMNS + ['config_hash'],
              _with_hash((row.as_csv_row() for row in report.rows), digest))
    lines = []
    for identity_id in report.identities():
        row = report.verdict(identity_id)
        lines.append(f"{identity_id}: {row.kind} residual={row.residual:.3e} "
                     f"order={row.order_label or '-'} {'PASS' if row.passed else 'FAIL'}")
    lines.append(f"verdict: {'PASS' if report.passed else 'FAIL'}")
    _write_report(out, digest, 'identities', lines)
    failure = report.first_failure()
    if failure:
        raise CheckFailure(f"identity '{failure}' failed", check_name=failure)


def _cmd_strain_check(config: Dict[str, Any], digest: str) -> None:
    run = config['run']
    result = run_strain_check(BandSpec.from_config(config['surface']), run['grids'],
                              samples=run['samples'], seed=run['seed'], family=run['family'],
                              single_thread=run['single_thread'])
    out = run['out']
    write_csv(os.path.join(out, 'strain.csv'), STRAIN_COLUMNS + ['config_hash'],
              _with_hash((s.as_csv_row() for s in result.samples), digest))
    lines = [f"{c.name}: {'PASS' if c.passed else 'FAIL'} ({c.detail})" for c in result.checks]
    for name in RESIDUAL_NAMES:
        verdicts = [row for row in result.residuals.rows
                    if row.identity_id.startswith(name + "[") and (row.exact or row.order is not None)]
        orders = [row.order for row in verdicts if not row.exact]
        lines.append(f"{name}: worst order {min(orders):.4f}" if orders else f"{name}: exact")
    lines.append(f"verdict: {'PASS' if result.passed else 'FAIL'}")
    _write_report(out, digest, 'strain-check', lines)
    failure = result.first_failure()
    if failure:
        raise CheckFailure(f"check '{failure}' failed", check_name=failure)


def _cmd_korn_sweep(config: Dict[str, Any], digest: str) -> None:
    sweep = SweepConfig.from_config(config)
    result = run_korn_sweep(sweep)
    result.config_hash = digest
    out = sweep.out
    write_csv(os.path.join(out, 'korn_sweep.csv'), SWEEP_COLUMNS + ['config_hash'],
              _with_hash((row.as_csv_row() for row in result.rows + result.cross_rows), digest))

    low, high = result.window
    lines = [f"preset: {result.preset}", f"band type: {result.band_type}"]
    lines += _sweep_lines(result.rows + result.cross_rows)
    if result.slope is not None:
        lines.append(f"beta: {result.slope:.6f} +/- {result.stderr:.6f}")
    else:
        lines.append("beta: not fitted")
    lines.append(f"reference exponent: {result.reference_exponent:.6f} window [{low:.2f}, {high:.2f}]")
    if result.cross_slope is not None:
        lines.append(f"beta (n_xi={CROSS_CHECK_N_XI}): {result.cross_slope:.6f} trend "
                     f"{'PASS' if result.trend_ok else 'FAIL'}")
    lines.append(f"verdict: {'PASS' if result.passed else 'FAIL'}")
    _write_report(out, digest, 'korn-sweep', lines)

    if not result.all_converged:
        stuck = [row.h for row in result.rows + result.cross_rows if row.status == 'not_converged']
        raise NumericalError(f"eigensolve did not converge for h = {stuck}", stage='eigensolve')
    if result.slope is None:
        raise CheckFailure("fewer than 3 usable thicknesses", check_name='exponent_fit')
    if not result.passed:
        raise CheckFailure(f"beta = {result.slope:.4f} outside [{low:.2f}, {high:.2f}] "
                           "or cross-check trend failed", check_name='korn_exponent')


COMMANDS: Dict[str, Callable[[Dict[str, Any], str], None]] = {
    'validate-surface': _cmd_validate_surface,
    'dump-geometry': _cmd_dump_geometry,
    'identities': _cmd_identities,
    'strain-check': _cmd_strain_check,
    'korn-sweep': _cmd_korn_sweep,
}


# -- argument parsing ---------------------------------------------------------

def _float_list(text: str) -> List[float]:
    return [float(v) for v in text.split(',') if v.strip()]


def _int_list(text: str) -> List[int]:
    return [int(v) for v in text.split(',') if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='TOML configuration file')
    common.add_argument('--preset', help='surface preset')
    common.add_argument('--grid', type=int, help='grid size N (n_t = n_s = N)')
    common.add_argument('--grids', type=_int_list, help='comma-separated grid sizes')
    common.add_argument('--seed', type=int)
    common.add_argument('--samples', type=int)
    common.add_argument('--family', choices=('random', 'rigid'))
    common.add_argument('--single-thread', action='store_true', default=None)
    common.add_argument('--out', help='output directory')
    common.add_argument('--thicknesses', type=_float_list, help='comma-separated thicknesses')
    common.add_argument('--n-xi', type=int, help='elements through the thickness')
    common.add_argument('--tol', type=float, help='eigensolver tolerance')
    common.add_argument('--cross-check', action='store_true', default=None)
    common.add_argument('--export-matrices', action='store_true', default=None)

    parser = argparse.ArgumentParser(prog='shell-rigidity', description=__doc__.splitlines()[0])
    commands = parser.add_subparsers(dest='command', required=True)
    for name in COMMANDS:
        commands.add_parser(name, parents=[common])
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Dict[str, Any]]:
    grids = args.grids
    if args.grid is not None and grids is None:
        # identities takes the single grid literally; strain-check refines it once
        grids = [args.grid, 2 * args.grid] if args.command == 'strain-check' else [args.grid]
    return {
        'surface': {'preset': args.preset, 'grid': args.grid},
        'sweep': {'thicknesses': args.thicknesses, 'n_xi': args.n_xi,
                  'cross_check': args.cross_check, 'export_matrices': args.export_matrices},
        'eigensolver': {'tol': args.tol},
        'run': {'seed': args.seed, 'samples': args.samples, 'grids': grids, 'family': args.family,
                'single_thread': args.single_thread, 'out': args.out},
    }


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    with ErrorHandler(context=args.command) as handler:
        file_config = load_config(args.config) if args.config else {}
        config = merge_config(file_config, _overrides(args))
        digest = config_hash(config)
        set_run_id(digest[:8])
        logger.info("Command started", extra={'command': args.command, 'config_hash': digest})
        COMMANDS[args.command](config, digest)

    if handler.error is not None:
        logger.debug("Command failed", extra={'error': error_summary(handler.error)})
    return handler.exit_code


if __name__ == "__main__":
    sys.exit(main())
