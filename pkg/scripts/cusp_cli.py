#!/usr/bin/env python3
"""
Command-line front end for the tangent-disk transmission toolkit.

Subcommands: basis, matrix, green, potential, solve, oracle, verify, map.
Every subcommand reads an optional JSON/YAML config (--config) that flags
override, writes CSV/JSON under the output directory and exits with
0 success, 1 failed verification, 2 bad configuration, 3 convergence
failure, 4 domain error.
"""

import argparse
import json
import logging
import os
import sys
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd
from dotenv import load_dotenv
from pydantic import ValidationError
from tqdm import tqdm

from geometry.maps import classify_many, equal_radius_map
from models.basis import EVEN, GENERAL, ODD, SYMMETRIC, BasisId, eval_u, eval_u_gradient, trace_fourier
from models.coeffmatrix import column_abs_sum, expansion_matrix, select_truncation, write_csv
from models.dirichlet import (
    FieldSample, evaluate_solution, solve_nonhomogeneous, theta_grid, unequal_radius_solve,
)
from models.greens import DISK, LOGARITHMIC, PHYSICAL, STRIP, TransmissionKernel, kernel_table, save_kernel_table
from models.medium import BULK_REGIONS, ConfigError, ConvergenceError, DomainError, VerificationError
from models.potential import CutoffFunction, volume_solution
from oracle.fd_solver import compare, solve_fd
from scripts.config import RunConfig, load_config
from scripts.verify import run_battery, transmission_residual

logger = logging.getLogger('cusp_cli')

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3
EXIT_DOMAIN = 4


def _threads() -> int:
    raw = os.getenv('CUSP_THREADS', '1')
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"CUSP_THREADS must be a positive integer, got {raw!r}")
    if n < 1:
        raise ConfigError(f"CUSP_THREADS must be a positive integer, got {raw!r}")
    return n


def _write_json(report: Dict[str, Any], path) -> None:
    with open(path, 'w') as f:
        json.dump(report, f, indent=2, sort_keys=True, default=str)


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Flag values that replace config-file entries."""
    out: Dict[str, Any] = {}

    def put(section: str, key: str, value):
        if value is not None:
            out.setdefault(section, {})[key] = value

    if getattr(args, 'alpha', None) is not None:
        put('medium', 'a0', (1.0 + args.alpha) / (1.0 - args.alpha))
        beta = args.alpha if args.beta is None else args.beta
        put('medium', 'b0', (1.0 + beta) / (1.0 - beta))
    put('medium', 'a0', getattr(args, 'a0', None))
    put('medium', 'b0', getattr(args, 'b0', None))
    put('medium', 'R0', getattr(args, 'R0', None))
    put('truncation', 'tail_tol', getattr(args, 'tail_tol', None))
    put('truncation', 'solve_tol', getattr(args, 'tol', None))
    put('output', 'directory', getattr(args, 'output', None))
    put('output', 'grid', getattr(args, 'grid', None))
    put('oracle', 'h', getattr(args, 'h', None))
    if getattr(args, 'geometry', None):
        radii = {}
        for item in args.geometry.split(','):
            key, _, value = item.partition('=')
            if key.strip() not in ('r1', 'r2') or not value:
                raise ConfigError(f"--geometry expects r1=...,r2=..., got {args.geometry!r}")
            radii[key.strip()] = float(value)
        out['geometry'] = radii
    return out


def field_points(R0: float, n: int, classify_geo=None, band: float = 1e-6) -> np.ndarray:
    """n x n grid points inside B_{R0}, off the interfaces and the cusp."""
    s = np.linspace(-R0, R0, n + 2)[1:-1]
    X, Y = np.meshgrid(s, s, indexing='ij')
    z = (X + 1j * Y).ravel()
    z = z[(np.abs(z) < R0) & (np.abs(z) > 1e-8)]
    tags = classify_many(z, classify_geo) if classify_geo is not None else classify_many(z)
    return z[np.isin(tags, BULK_REGIONS)]


def cmd_basis(cfg: RunConfig, args: argparse.Namespace) -> int:
    params = cfg.medium.build()
    trunc = cfg.truncation.build()
    family = SYMMETRIC if args.family == 'sym' else GENERAL
    bid = BasisId(family, EVEN if args.parity == 'even' else ODD, args.j)
    stem = f"basis_{args.family}_{args.parity}_{args.j}"

    if args.circle:
        pts = params.R0 * np.exp(1j * theta_grid(args.n_circle))
    else:
        pts = field_points(params.R0, cfg.output.grid)
    res = eval_u(bid, pts, params, trunc)
    grad = eval_u_gradient(bid, pts, params, trunc).value
    sample = FieldSample(pts, classify_many(pts), np.asarray(res.value), grad, np.asarray(res.tail_bound))
    field_path = cfg.output_path(stem)
    sample.save_results(str(field_path), cfg.header(terms_used_max=res.terms_used))

    trace = trace_fourier(bid, params, n_coeffs=args.n_coeffs, trunc=trunc, n_quad=cfg.truncation.n_quad)
    trace_df = pd.DataFrame({'l': np.arange(len(trace.entries)), 'coefficient': trace.entries})
    trace_path = cfg.output_path(stem + '_trace')
    write_csv(trace_df, str(trace_path), cfg.header(parity=bid.parity, R0=repr(params.R0)))

    print(f"Basis member {family} {bid.parity} j={args.j}: {len(pts)} points")
    print(f"  u range [{np.min(res.value):.6g}, {np.max(res.value):.6g}], max tail {np.max(res.tail_bound):.2e}")
    print(f"  Files saved to: {field_path}, {trace_path}")
    return EXIT_OK


def cmd_matrix(cfg: RunConfig, args: argparse.Namespace) -> int:
    params = cfg.medium.build()
    trunc = cfg.truncation.build()
    N = args.N if args.N is not None else select_truncation(params.alpha, params.R0, cfg.truncation.solve_tol)
    parity = EVEN if args.parity == 'even' else ODD
    matrix = expansion_matrix(N, params, parity, trunc, cfg.truncation.n_quad)
    matrix_path = cfg.output_path(f"matrix_{parity}")
    matrix.save_results(str(matrix_path), cfg.header(source=matrix.source))

    columns = []
    for j, gap in enumerate(matrix.gaps, start=1):
        row = {'j': j, 'gap': float(gap)}
        if matrix.source == 'closed-form':
            row['column_abs_sum'] = column_abs_sum(j, params.alpha, params.R0, trunc)['value']
        columns.append(row)
    report = {
        'config_hash': cfg.config_hash(),
        'N': N,
        'parity': parity,
        'source': matrix.source,
        'min_gap': matrix.min_gap,
        'all_dominant': bool(np.all(matrix.gaps > 0)),
        'columns': columns,
    }
    report_path = cfg.output_path(f"matrix_{parity}_dominance", 'json')
    _write_json(report, report_path)

    print(f"Matrix N={N} ({parity}, {matrix.source}): min dominance gap {matrix.min_gap:.3e}")
    print(f"  Files saved to: {matrix_path}, {report_path}")
    return EXIT_OK


def cmd_green(cfg: RunConfig, args: argparse.Namespace) -> int:
    params = cfg.medium.build()
    kernel = TransmissionKernel(
        DISK if args.geometry_kind == 'disk' else STRIP,
        params,
        cfg.truncation.build(),
        PHYSICAL if args.normalization == 'physical' else LOGARITHMIC,
    )
    rng = np.random.default_rng(cfg.seed)
    sources = [complex(*args.source)] if args.source else []
    while len(sources) < args.n_sources:
        y = complex(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0))
        if np.all(np.isin(kernel.regions(np.array([y])), BULK_REGIONS)) and abs(y) > 0.05:
            sources.append(y)
    xs = field_points(2.0, cfg.output.grid) if kernel.geometry == DISK else \
        (lambda s: (s[:, None] + 1j * s[None, :]).ravel())(np.linspace(-1.9, 1.9, cfg.output.grid))
    xs = xs[np.isin(kernel.regions(xs), BULK_REGIONS)]
    xs = xs[np.min(np.abs(xs[:, None] - np.array(sources)[None, :]), axis=1) > 1e-6]

    df = kernel_table(kernel, xs, sources)
    path = cfg.output_path(f"green_{kernel.geometry}")
    save_kernel_table(df, str(path), kernel, cfg.header())
    print(f"Kernel table ({kernel.geometry}, {kernel.normalization}): {len(df)} rows")
    print(f"  max tail bound {df['tail_bound'].max():.2e}")
    print(f"  File saved to: {path}")
    return EXIT_OK


def cmd_potential(cfg: RunConfig, args: argparse.Namespace) -> int:
    params = cfg.medium.build()
    kernel = TransmissionKernel(DISK, params, cfg.truncation.build(), PHYSICAL)
    f = cfg.rhs.build()
    cutoff = CutoffFunction(outer=2.0 * params.R0)
    pts = field_points(params.R0, cfg.output.grid)
    quad = cfg.quadrature.build()
    values = np.zeros(len(pts))
    tails = np.zeros(len(pts))
    chunks = np.array_split(np.arange(len(pts)), max(1, len(pts) // 256))
    for idx in tqdm(chunks, desc='potential'):
        res = volume_solution(pts[idx], f, cutoff, kernel, quad, support=params.R0)
        values[idx] = res.value
        tails[idx] = res.tail_bound
    df = pd.DataFrame({'x1': pts.real, 'x2': pts.imag, 'region': classify_many(pts), 'u': values, 'tail_bound': tails})
    path = cfg.output_path('potential')
    write_csv(df, str(path), cfg.header(achieved_tol=repr(float(tails.max(initial=0.0)))))
    print(f"Volume potential on {len(pts)} points, max |u| {np.max(np.abs(values), initial=0.0):.6g}")
    print(f"  File saved to: {path}")
    return EXIT_OK


def _solve(cfg: RunConfig, threads: int):
    """Run the configured solve; returns (evaluator, report)."""
    params = cfg.medium.build()
    geo = cfg.geometry.build()
    trunc = cfg.truncation.build()
    quad = cfg.quadrature.build()
    f = cfg.rhs.build()
    tol = cfg.truncation.solve_tol
    if geo.canonical:
        g = cfg.boundary.build(params.R0)
        sol = solve_nonhomogeneous(f, g, params, tol, trunc, quad, cfg.quadrature.n_boundary)

        def evaluator(pts, region=None, gradient=True):
            return evaluate_solution(sol, pts, region, gradient=gradient, n_threads=threads)

        report = {'route': 'direct', 'solve': sol.report, 'warning': sol.warning}
    else:
        comp = unequal_radius_solve(f, cfg.boundary.theta_function(), geo, params, tol, trunc, quad,
                                    cfg.quadrature.n_boundary)

        def evaluator(pts, region=None, gradient=True):
            return comp.evaluate(pts, region, gradient=gradient, n_threads=threads)

        report = {'route': 'mobius', 'solve': comp.report}
    return evaluator, report


def cmd_solve(cfg: RunConfig, args: argparse.Namespace) -> int:
    threads = _threads()
    params = cfg.medium.build()
    geo = cfg.geometry.build()
    evaluator, report = _solve(cfg, threads)

    pts = field_points(params.R0, cfg.output.grid, geo)
    sample = evaluator(pts)
    field_path = cfg.output_path('solution')
    sample.save_results(str(field_path), cfg.header())

    theta = theta_grid(cfg.quadrature.n_boundary)
    g = cfg.boundary.theta_function()(theta)
    trace = evaluator(params.R0 * np.exp(1j * theta), gradient=False).u
    report['boundary_residual'] = float(np.max(np.abs(trace - g)))
    report['transmission'] = transmission_residual(
        lambda p, r: evaluator(p, r, gradient=False).u,
        lambda p, r: evaluator(p, r).grad,
        params, n=64, geo=geo,
    )
    report['config_hash'] = cfg.config_hash()

    if args.oracle:
        disc = solve_fd(params, cfg.oracle.h, cfg.boundary.theta_function(),
                        rhs=None if cfg.rhs.build().is_zero else cfg.rhs.build(), geo=geo, method=cfg.oracle.method)
        mask = disc.grid.comparison_mask(stride=cfg.oracle.stride)
        oracle_sample = evaluator(disc.grid.centers[mask], disc.grid.region[mask], gradient=False)
        report['oracle'] = compare(oracle_sample, disc, cfg.oracle.norm)

    report_path = cfg.output_path('solve_report', 'json')
    _write_json(report, report_path)
    print(f"Solve ({report['route']}): boundary residual {report['boundary_residual']:.2e}")
    print(f"  transmission jumps: value {report['transmission']['value_jump']:.2e}, "
          f"flux {report['transmission']['flux_jump']:.2e}")
    if 'oracle' in report:
        print(f"  FD oracle relative {cfg.oracle.norm} error {report['oracle']['relative_error']:.3e}")
    print(f"  Files saved to: {field_path}, {report_path}")
    return EXIT_OK


def cmd_oracle(cfg: RunConfig, args: argparse.Namespace) -> int:
    params = cfg.medium.build()
    f = cfg.rhs.build()
    disc = solve_fd(params, cfg.oracle.h, cfg.boundary.theta_function(), rhs=None if f.is_zero else f,
                    geo=cfg.geometry.build(), method=cfg.oracle.method)
    path = cfg.output_path('oracle_grid')
    df = disc.save_results(str(path), cfg.header())
    print(f"FD oracle h={disc.h:.6g}: {len(df)} unknowns, residual {disc.residual:.2e}")
    print(f"  File saved to: {path}")
    return EXIT_OK


def cmd_verify(cfg: RunConfig, args: argparse.Namespace) -> int:
    params = cfg.medium.build()
    names = args.checks.split(',') if args.checks else None
    results = run_battery(params, cfg.truncation.build(), names, progress=True)
    report = {
        'config_hash': cfg.config_hash(),
        'medium': params.to_dict(),
        'passed': all(r.passed for r in results),
        'checks': [r.to_dict() for r in results],
    }
    path = cfg.output_path('verify', 'json')
    _write_json(report, path)
    for r in results:
        print(f"  {r.name:<16} {'pass' if r.passed else 'FAIL'}")
    print(f"  Report saved to: {path}")
    if not report['passed']:
        failed = [r.name for r in results if not r.passed]
        raise VerificationError(f"failed checks: {', '.join(failed)}", check=failed[0])
    return EXIT_OK


def cmd_map(cfg: RunConfig, args: argparse.Namespace) -> int:
    geo = cfg.geometry.build()
    R0 = cfg.medium.R0
    mobius = equal_radius_map(geo, exclusion=(0.0, R0))
    report = mobius.to_dict()
    c1, rad1 = mobius.image_circle(geo.center1, geo.r1)
    c2, rad2 = mobius.image_circle(geo.center2, geo.r2)
    report.update({
        'image1_center': [c1.real, c1.imag], 'image1_radius': rad1,
        'image2_center': [c2.real, c2.imag], 'image2_radius': rad2,
        'config_hash': cfg.config_hash(),
    })
    path = cfg.output_path('map', 'json')
    _write_json(report, path)
    print(f"Equal-radius map for r1={geo.r1}, r2={geo.r2}:")
    for key in ('pole_x1', 'pole_x2', 'rotation', 'scale', 'translation_x1', 'translation_x2', 'aspect_root', 'locus_angle'):
        print(f"  {key:<15} {report[key]}")
    print(f"  image radii {rad1:.15g}, {rad2:.15g}")
    print(f"  Report saved to: {path}")
    return EXIT_OK


COMMANDS: Dict[str, Callable[[RunConfig, argparse.Namespace], int]] = {
    'basis': cmd_basis,
    'matrix': cmd_matrix,
    'green': cmd_green,
    'potential': cmd_potential,
    'solve': cmd_solve,
    'oracle': cmd_oracle,
    'verify': cmd_verify,
    'map': cmd_map,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=str, default=None, help='JSON or YAML run config')
    common.add_argument('--a0', type=float, default=None, help='Coefficient in the upper disk')
    common.add_argument('--b0', type=float, default=None, help='Coefficient in the lower disk')
    common.add_argument('--alpha', type=float, default=None, help='Contrast alpha (sets a0)')
    common.add_argument('--beta', type=float, default=None, help='Contrast beta (sets b0; defaults to alpha)')
    common.add_argument('--R0', type=float, default=None, help='Outer radius')
    common.add_argument('--tail-tol', type=float, default=None, dest='tail_tol', help='Series tail target')
    common.add_argument('--tol', type=float, default=None, help='Solve tolerance')
    common.add_argument('--grid', type=int, default=None, help='Output grid points per side')
    common.add_argument('--output', type=str, default=None, help='Output directory')
    common.add_argument('--geometry', type=str, default=None, help='Disk radii, e.g. r1=1,r2=2')

    parser = argparse.ArgumentParser(description='Tangent-disk transmission toolkit')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('basis', parents=[common], help='Evaluate a basis member and its trace')
    p.add_argument('--family', choices=['sym', 'gen'], default='sym')
    p.add_argument('--parity', choices=['even', 'odd'], default='even')
    p.add_argument('--j', type=int, default=0)
    p.add_argument('--circle', action='store_true', help='Sample on |x| = R0 instead of a grid')
    p.add_argument('--n-circle', type=int, default=256, dest='n_circle')
    p.add_argument('--n-coeffs', type=int, default=64, dest='n_coeffs')

    p = sub.add_parser('matrix', parents=[common], help='Truncated expansion matrix and dominance report')
    p.add_argument('--N', type=int, default=None)
    p.add_argument('--parity', choices=['even', 'odd'], default='even')

    p = sub.add_parser('green', parents=[common], help='Tabulate the Green kernel')
    p.add_argument('--kind', choices=['disk', 'strip'], default='disk', dest='geometry_kind')
    p.add_argument('--normalization', choices=['log', 'physical'], default='physical')
    p.add_argument('--source', type=float, nargs=2, default=None, metavar=('Y1', 'Y2'))
    p.add_argument('--n-sources', type=int, default=1, dest='n_sources')

    sub.add_parser('potential', parents=[common], help='Volume potential of the configured field f')

    p = sub.add_parser('solve', parents=[common], help='Full Dirichlet solve')
    p.add_argument('--oracle', action='store_true', help='Also compare with the finite-difference oracle')
    p.add_argument('--h', type=float, default=None, help='Oracle grid spacing')

    p = sub.add_parser('oracle', parents=[common], help='Finite-difference solve only')
    p.add_argument('--h', type=float, default=None, help='Grid spacing')

    p = sub.add_parser('verify', parents=[common], help='Run the verification battery')
    p.add_argument('--checks', type=str, default=None, help='Comma-separated check names')

    sub.add_parser('map', parents=[common], help='Print the equal-radius Mobius map')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    logging.basicConfig(
        level=os.getenv('CUSP_LOG_LEVEL', 'INFO').upper(),
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides(args))
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, ValidationError) as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as e:
        print(f"Convergence failure: {e} (achieved {e.achieved:.3e}, requested {e.requested:.3e})", file=sys.stderr)
        return EXIT_CONVERGENCE
    except DomainError as e:
        print(f"Domain error: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    except VerificationError as e:
        print(f"Verification failed: {e}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == '__main__':
    sys.exit(main())
