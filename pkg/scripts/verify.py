"""
Named verification battery run by `cusp_cli verify`.

Each check takes (params, trunc) and returns a CheckResult; a check that
does not apply to the given medium passes with a 'skipped' note.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional

import numpy as np
from tqdm import tqdm

from geometry.maps import UNIT_DISKS, DiskGeometry, theta_c
from models.basis import (
    EVEN, GENERAL, ODD, SYMMETRIC, BasisId, eval_u, eval_u_gradient, numerical_trace_fourier, trace_fourier,
)
from models.coeffmatrix import column_abs_sum, expand_boundary
from models.greens import DISK, LOGARITHMIC, PHYSICAL, STRIP, TransmissionKernel, correspondence_check
from models.medium import INCLUSION1, INCLUSION2, MATRIX, CuspError, MediumParams, TruncationPolicy

logger = logging.getLogger(__name__)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {'name': self.name, 'passed': self.passed, 'detail': self.detail}


def interface_samples(n: int = 64, margin: float = 0.3, geo: DiskGeometry = UNIT_DISKS):
    """
    Points on both interface circles, clear of the cusp by an angular margin.

    Returns:
        Dict inclusion tag -> (points, outward unit normals)
    """
    out = {}
    disks = ((INCLUSION1, geo.center1, geo.r1, -np.pi / 2), (INCLUSION2, geo.center2, geo.r2, np.pi / 2))
    for region, center, radius, phi0 in disks:
        phi = np.linspace(phi0 + margin, phi0 + 2.0 * np.pi - margin, n)
        normals = np.exp(1j * phi)
        out[region] = (center + radius * normals, normals)
    return out


def transmission_residual(value_fn: Callable, grad_fn: Callable, params: MediumParams,
                          n: int = 64, geo: DiskGeometry = UNIT_DISKS) -> Dict[str, float]:
    """
    One-sided jumps of u and a du/dn across both interfaces.

    value_fn(points, region) and grad_fn(points, region) evaluate the field
    with an explicit bulk-region hint; grad_fn returns (n, 2) arrays.
    """
    value_jump = 0.0
    flux_jump = 0.0
    scale = 0.0
    for region, (pts, normals) in interface_samples(n, geo=geo).items():
        u_in = np.asarray(value_fn(pts, region))
        u_out = np.asarray(value_fn(pts, MATRIX))
        g_in = np.asarray(grad_fn(pts, region))
        g_out = np.asarray(grad_fn(pts, MATRIX))
        dn_in = g_in[:, 0] * normals.real + g_in[:, 1] * normals.imag
        dn_out = g_out[:, 0] * normals.real + g_out[:, 1] * normals.imag
        a = params.coefficient(region)
        value_jump = max(value_jump, float(np.max(np.abs(u_in - u_out))))
        flux_jump = max(flux_jump, float(np.max(np.abs(a * dn_in - dn_out))))
        scale = max(scale, float(np.max(np.abs(u_out))), float(np.max(np.abs(dn_out))))
    return {'value_jump': value_jump, 'flux_jump': flux_jump, 'scale': scale}


def check_transmission(params: MediumParams, trunc: TruncationPolicy, j_max: int = 8, n: int = 32) -> CheckResult:
    family = SYMMETRIC if params.symmetric else GENERAL
    worst = {'j': None, 'parity': None, 'residual': 0.0}
    passed = True
    for parity in (EVEN, ODD):
        for j in range(0 if parity == EVEN else 1, j_max + 1):
            bid = BasisId(family, parity, j)
            tails = []

            def value_fn(pts, region, bid=bid):
                res = eval_u(bid, pts, params, trunc, region)
                tails.append(float(np.max(res.tail_bound)))
                return res.value

            def grad_fn(pts, region, bid=bid):
                res = eval_u_gradient(bid, pts, params, trunc, region)
                tails.append(float(np.max(res.tail_bound)))
                return res.value

            jumps = transmission_residual(value_fn, grad_fn, params, n)
            residual = max(jumps['value_jump'], jumps['flux_jump'])
            limit = max(1e-8, 2.0 * max(tails))
            if residual > limit:
                passed = False
            if residual >= worst['residual']:
                worst = {'j': j, 'parity': parity, 'residual': residual, 'limit': limit}
    return CheckResult('transmission', passed, worst)


def check_dominance(params: MediumParams, trunc: TruncationPolicy, j_max: int = 200) -> CheckResult:
    if not params.symmetric or params.R0 <= 2.0:
        return CheckResult('dominance', True, {'skipped': 'needs a0 == b0 and R0 > 2'})
    sums = [column_abs_sum(j, params.alpha, params.R0, trunc)['value'] for j in range(1, j_max + 1)]
    worst = float(max(sums))
    return CheckResult('dominance', worst < 1.0, {'max_column_sum': worst, 'j_max': j_max})


def check_roundtrip(params: MediumParams, trunc: TruncationPolicy, j_max: int = 6, n_quad: int = 1024) -> CheckResult:
    if not params.symmetric or params.R0 <= 2.0:
        return CheckResult('roundtrip', True, {'skipped': 'closed-form traces need a0 == b0 and R0 > 2'})
    err = 0.0
    for parity in (EVEN, ODD):
        for j in range(0 if parity == EVEN else 1, j_max + 1):
            bid = BasisId(SYMMETRIC, parity, j)
            closed = trace_fourier(bid, params, n_coeffs=32, trunc=trunc).entries
            numeric = numerical_trace_fourier(bid, params, n_quad, trunc, n_coeffs=32).entries
            err = max(err, float(np.max(np.abs(closed - numeric))))
    return CheckResult('roundtrip', err <= 1e-9, {'max_coefficient_error': err})


def check_expansion(params: MediumParams, trunc: TruncationPolicy, j: int = 3) -> CheckResult:
    if params.R0 <= 2.0:
        return CheckResult('expansion', True, {'skipped': 'needs R0 > 2'})
    family = SYMMETRIC if params.symmetric else GENERAL
    trace = numerical_trace_fourier(BasisId(family, EVEN, j), params, 1024, trunc)
    vec, report = expand_boundary(trace, None, params, tol=1e-10, trunc=trunc)
    target = np.zeros(len(vec))
    target[j] = 1.0
    err = float(np.max(np.abs(vec.entries - target)))
    return CheckResult('expansion', err <= 1e-8, {'unit_vector_error': err, 'N': report['N']})


def check_correspondence(params: MediumParams, trunc: TruncationPolicy, n_pairs: int = 20, seed: int = 42) -> CheckResult:
    rng = np.random.default_rng(seed)
    strip = TransmissionKernel(STRIP, params, trunc, LOGARITHMIC)
    disk = TransmissionKernel(DISK, params, trunc, LOGARITHMIC)
    worst = 0.0
    done = 0
    while done < n_pairs:
        x = complex(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0))
        y = complex(theta_c(complex(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0))))
        if abs(abs(x.real) - 0.5) < 0.05 or abs(abs((1j / y).real) - 0.5) < 0.05:
            continue
        if abs(x) < 0.1 or abs(y) > 2.5 or abs(x - complex(theta_c(y))) < 0.05:
            continue
        res = correspondence_check(x, y, strip, disk)
        worst = max(worst, res['residual'] - res['tail_bound'])
        done += 1
    return CheckResult('correspondence', worst <= 1e-8, {'max_residual_over_tail': worst, 'pairs': n_pairs})


def check_charge(params: MediumParams, trunc: TruncationPolicy, eps: float = 0.05, n: int = 256) -> CheckResult:
    kernel = TransmissionKernel(DISK, params, trunc, PHYSICAL)
    t = 2.0 * np.pi * np.arange(n) / n
    normals = np.exp(1j * t)
    charges = {}
    for region, y in ((MATRIX, 1.5 + 0j), (INCLUSION1, 1.2j), (INCLUSION2, -0.8j)):
        pts = y + eps * normals
        grad = kernel.gradient_x(pts, y, region_x=region).value
        dn = grad[:, 0] * normals.real + grad[:, 1] * normals.imag
        charges[region] = float(params.coefficient(region) * np.mean(dn) * 2.0 * np.pi * eps)
    err = max(abs(c - 1.0) for c in charges.values())
    return CheckResult('charge', err <= 1e-6, {'charges': charges, 'max_error': err})


CHECKS: Dict[str, Callable[[MediumParams, TruncationPolicy], CheckResult]] = {
    'transmission': check_transmission,
    'dominance': check_dominance,
    'roundtrip': check_roundtrip,
    'expansion': check_expansion,
    'correspondence': check_correspondence,
    'charge': check_charge,
}


def run_battery(params: MediumParams, trunc: TruncationPolicy, names: Optional[Iterable[str]] = None,
                progress: bool = False) -> List[CheckResult]:
    """Run the named checks; a check that raises counts as failed with its error recorded."""
    selected = list(CHECKS) if names is None else list(names)
    results = []
    for name in tqdm(selected, desc='verify', disable=not progress):
        if name not in CHECKS:
            results.append(CheckResult(name, False, {'error': 'unknown check'}))
            continue
        try:
            result = CHECKS[name](params, trunc)
        except CuspError as e:
            result = CheckResult(name, False, {'error': f"{type(e).__name__}: {e}"})
        logger.info("check %s: %s", name, 'pass' if result.passed else 'FAIL')
        results.append(result)
    return results
