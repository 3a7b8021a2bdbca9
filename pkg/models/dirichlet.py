"""
Dirichlet Problems on B_{R0} by Basis Superposition

Implements:
- FourierBoundary: parity-split trigonometric analysis of boundary samples
- solve_homogeneous: u = sum gamma_j u_j + sum delta_j v_j matching g on |x| = R0
- evaluate_solution: values and gradients on point sets (FieldSample)
- solve_nonhomogeneous: volume potential plus homogeneous boundary correction
- unequal_radius_solve: reduction of r1 != r2 to the canonical unit disks
- SourceSolution: canonical kernel sources fitted to the boundary data of the reduced problem
- cusp_gradient_profile: gradient sizes on dyadic approaches to the tangency point
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional

import numpy as np
import pandas as pd
from scipy import linalg

from geometry.maps import DiskGeometry, MobiusMap, classify_many, equal_radius_map
from models.basis import (
    EVEN, GENERAL, ODD, SYMMETRIC, BasisId, eval_u, eval_u_gradient, fourier_split,
)
from models.coeffmatrix import expand_boundary, lp_s_norm, write_csv
from models.greens import DISK, LOGARITHMIC, PHYSICAL, TransmissionKernel
from models.medium import (
    INCLUSION1, INCLUSION2, MATRIX, CoeffVector, ConfigError,
    ConvergenceError, DomainError, MediumParams, TruncationPolicy, as_complex,
)
from models.potential import (
    DEFAULT_QUADRATURE, CutoffFunction, PiecewiseField, QuadratureSpec,
    volume_gradient, volume_solution,
)

logger = logging.getLogger(__name__)

DEFAULT_TRUNCATION = TruncationPolicy()
CHECK_POINTS = 4096
SOURCE_COUNTS = (32, 64, 128, 256)
SOURCE_RATIO = 1.15


def _check_grid_size(n: int):
    if n < 256 or n & (n - 1):
        raise ConfigError(f"Boundary grid size must be a power of two >= 256, got {n}")


def theta_grid(n: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(n) / n


@dataclass
class FourierBoundary:
    """
    Boundary data on |x| = R0 split by parity in x1.

    even holds cos(l phi) and odd holds sin(l phi) coefficients with
    phi = theta - pi/2, so even entries are the e_j coordinates and odd
    entries the coordinates for the v_j family.
    """

    even: CoeffVector
    odd: CoeffVector
    R0: float

    @classmethod
    def from_callable(cls, g: Callable[[np.ndarray], np.ndarray], R0: float, n: int = CHECK_POINTS) -> 'FourierBoundary':
        """Sample g(theta) on a uniform grid and analyze it."""
        _check_grid_size(n)
        return analyze_boundary(np.asarray(g(theta_grid(n)), dtype=float), R0)

    @classmethod
    def from_modes(cls, R0: float, cos_theta: Optional[Dict[int, float]] = None,
                   sin_theta: Optional[Dict[int, float]] = None, n: int = 1024) -> 'FourierBoundary':
        """Data given as {mode: amplitude} in cos(l theta) and sin(l theta)."""
        cos_theta = cos_theta or {}
        sin_theta = sin_theta or {}

        def g(theta):
            out = np.zeros_like(theta)
            for l, c in cos_theta.items():
                out += c * np.cos(l * theta)
            for l, c in sin_theta.items():
                out += c * np.sin(l * theta)
            return out

        return cls.from_callable(g, R0, n)

    @property
    def is_zero(self) -> bool:
        return not (np.any(self.even.entries) or np.any(self.odd.entries))

    def synthesize(self, theta) -> np.ndarray:
        """g(theta) from the stored coefficients."""
        phi = np.asarray(theta, dtype=float) - np.pi / 2.0
        l_e = np.arange(len(self.even.entries))
        l_o = np.arange(len(self.odd.entries))
        out = np.cos(np.multiply.outer(phi, l_e)) @ self.even.entries
        out = out + np.sin(np.multiply.outer(phi, l_o)) @ self.odd.entries
        return out

    def __sub__(self, other: 'FourierBoundary') -> 'FourierBoundary':
        n = max(len(self.even), len(other.even))
        m = max(len(self.odd), len(other.odd))
        return FourierBoundary(
            CoeffVector(self.even.truncated(n).entries - other.even.truncated(n).entries, EVEN),
            CoeffVector(self.odd.truncated(m).entries - other.odd.truncated(m).entries, ODD),
            self.R0,
        )


def analyze_boundary(samples, R0: float, theta: Optional[np.ndarray] = None) -> FourierBoundary:
    """
    Parity-split Fourier analysis of samples g(theta_m), theta_m = 2 pi m / n.

    Args:
        samples: Values on the uniform theta-grid
        R0: Circle radius
        theta: Optional grid, checked for uniformity

    Raises:
        ConfigError: non-uniform grid or size not a power of two >= 256
    """
    g = np.asarray(samples, dtype=float)
    n = len(g)
    _check_grid_size(n)
    if theta is not None:
        theta = np.asarray(theta, dtype=float)
        if len(theta) != n or np.max(np.abs(theta - theta_grid(n))) > 1e-12 * n:
            raise ConfigError("Boundary samples must sit on the uniform grid theta_m = 2 pi m / n")
    # phi = theta - pi/2 shifts the grid by n/4 samples
    g_phi = np.roll(g, -n // 4)
    cos_c, sin_c = fourier_split(g_phi)
    return FourierBoundary(CoeffVector(cos_c, EVEN), CoeffVector(sin_c, ODD), R0)


@dataclass
class FieldSample:
    """Solution values and gradients on a point set."""

    points: np.ndarray
    region: np.ndarray
    u: np.ndarray
    grad: np.ndarray
    tail_bound: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'x1': self.points.real,
            'x2': self.points.imag,
            'region': self.region,
            'u': self.u,
            'ux': self.grad[:, 0],
            'uy': self.grad[:, 1],
            'tail_bound': self.tail_bound,
        })

    def save_results(self, output_path: str, header: Optional[Dict[str, Any]] = None) -> pd.DataFrame:
        df = self.to_frame()
        lines = {'achieved_tol': repr(float(np.max(self.tail_bound, initial=0.0)))}
        lines.update(header or {})
        write_csv(df, output_path, lines)
        logger.info("Saved %d field samples to %s", len(df), output_path)
        return df


@dataclass
class ParticularSolution:
    """Volume potential attached to a series solution."""

    data: PiecewiseField
    cutoff: CutoffFunction
    kernel: TransmissionKernel
    quad: QuadratureSpec = DEFAULT_QUADRATURE
    support: Optional[float] = None

    def value(self, z: np.ndarray, region=None) -> np.ndarray:
        return volume_solution(z, self.data, self.cutoff, self.kernel, self.quad,
                               region_x=region, support=self.support).value

    def gradient(self, z: np.ndarray, region=None) -> np.ndarray:
        return volume_gradient(z, self.data, self.cutoff, self.kernel, self.quad,
                               region_x=region, support=self.support)


@dataclass
class SeriesSolution:
    """
    u = sum_j even_j u_j + sum_j odd_j v_j (+ particular) in canonical geometry.
    """

    params: MediumParams
    even: CoeffVector
    odd: CoeffVector
    trunc: TruncationPolicy = DEFAULT_TRUNCATION
    particular: Optional[ParticularSolution] = None
    report: Dict[str, Any] = field(default_factory=dict)
    warning: bool = False

    @property
    def family(self) -> str:
        return SYMMETRIC if self.params.symmetric else GENERAL

    def coefficient_norm(self, s: float = 0.0) -> float:
        return float(np.hypot(lp_s_norm(self.even, s), lp_s_norm(self.odd, s)))

    def truncated(self, n: int) -> 'SeriesSolution':
        return SeriesSolution(self.params, self.even.truncated(n + 1), self.odd.truncated(n + 1),
                              self.trunc, self.particular, dict(self.report), self.warning)

    def members(self):
        for parity, vec in ((EVEN, self.even), (ODD, self.odd)):
            for j, c in enumerate(vec.entries):
                if c != 0.0 and not (parity == ODD and j == 0):
                    yield BasisId(self.family, parity, j), float(c)


def _series_values(sol: SeriesSolution, z: np.ndarray, region, gradient: bool):
    u = np.zeros(z.shape)
    grad = np.zeros(z.shape + (2,))
    tail = np.zeros(z.shape)
    for bid, c in sol.members():
        val = eval_u(bid, z, sol.params, sol.trunc, region)
        u += c * val.value
        tail += abs(c) * np.asarray(val.tail_bound)
        if gradient:
            g = eval_u_gradient(bid, z, sol.params, sol.trunc, region)
            grad += c * g.value
    if sol.particular is not None:
        u += sol.particular.value(z, region)
        if gradient:
            grad += sol.particular.gradient(z, region)
    return u, grad, tail


@dataclass
class SourceSolution:
    """
    u(w) = constant + sum_k weights_k G(w, sources_k) (+ particular) in canonical geometry.

    G is the logarithmic disk kernel, so every term already satisfies the
    transmission conditions on the unit circles.
    """

    kernel: TransmissionKernel
    sources: np.ndarray
    weights: np.ndarray
    constant: float = 0.0
    particular: Optional[ParticularSolution] = None
    report: Dict[str, Any] = field(default_factory=dict)
    warning: bool = False

    @property
    def params(self) -> MediumParams:
        return self.kernel.params


def _source_values(sol: SourceSolution, z: np.ndarray, region, gradient: bool):
    u = np.full(z.shape, float(sol.constant))
    grad = np.zeros(z.shape + (2,))
    tail = np.zeros(z.shape)
    for s, c in zip(sol.sources, sol.weights):
        val = sol.kernel.value(z, s, region)
        u += c * val.value
        tail += abs(c) * np.asarray(val.tail_bound)
        if gradient:
            grad += c * sol.kernel.gradient_x(z, s, region).value
    if sol.particular is not None:
        u += sol.particular.value(z, region)
        if gradient:
            grad += sol.particular.gradient(z, region)
    return u, grad, tail


def evaluate_solution(sol, points, region=None, gradient: bool = True,
                      n_threads: int = 1, chunk: int = 512) -> FieldSample:
    """
    Evaluate a solution on a point set.

    Args:
        sol: SeriesSolution or SourceSolution
        points: Evaluation points
        region: Optional bulk-region hints (needed for points on interfaces)
        gradient: Also compute gradients
        n_threads: Thread-pool size for chunked evaluation

    Returns:
        FieldSample with per-point region tags
    """
    z = as_complex(points)
    if np.any(np.abs(z) <= 1e-10):
        raise DomainError("Evaluation point is within the cusp tolerance of the tangency point")
    if region is None:
        tags = classify_many(z)
        hints = None
    else:
        hints = np.full(z.shape, region, dtype=object) if isinstance(region, str) else np.asarray(region, dtype=object)
        tags = hints

    starts = list(range(0, len(z), chunk))

    def work(start):
        sl = slice(start, start + chunk)
        values = _source_values if isinstance(sol, SourceSolution) else _series_values
        return values(sol, z[sl], None if hints is None else hints[sl], gradient)

    if n_threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(s) for s in starts]
    if not parts:
        empty = np.zeros(0)
        return FieldSample(z, tags, empty, np.zeros((0, 2)), empty)
    u = np.concatenate([p[0] for p in parts])
    grad = np.concatenate([p[1] for p in parts])
    tail = np.concatenate([p[2] for p in parts])
    return FieldSample(points=z, region=tags, u=u, grad=grad, tail_bound=tail)


def _circle_trace(sol: SeriesSolution, R0: float, n: int) -> np.ndarray:
    theta = theta_grid(n)
    pts = R0 * np.exp(1j * theta)
    u, _, _ = _series_values(sol, pts, None, False)
    return u


def solve_homogeneous(g: FourierBoundary, params: MediumParams, tol: float = 1e-10,
                      trunc: TruncationPolicy = DEFAULT_TRUNCATION, n_quad: int = 1024,
                      n_check: int = CHECK_POINTS) -> SeriesSolution:
    """
    Solve div(a grad u) = 0 in B_{R0}, u = g on the circle.

    Even data is expanded over u_j, odd data over v_j. The re-synthesized
    trace is compared with g on an n_check-point grid.

    Raises:
        ConvergenceError: trace mismatch above 10 * tol
    """
    if abs(g.R0 - params.R0) > 1e-12 * params.R0:
        raise ConfigError(f"Boundary data radius {g.R0} differs from R0={params.R0}")
    family = SYMMETRIC if params.symmetric else GENERAL
    report: Dict[str, Any] = {'family': family}
    coeffs = {}
    for parity, data in ((EVEN, g.even), (ODD, g.odd)):
        if not np.any(np.abs(data.entries) > tol * 1e-3):
            coeffs[parity] = CoeffVector(np.zeros(1), parity)
            continue
        vec, rep = expand_boundary(data, None, params, tol=tol, trunc=trunc, n_quad=n_quad)
        coeffs[parity] = vec
        report[parity] = rep

    sol = SeriesSolution(params, coeffs[EVEN], coeffs[ODD], trunc, report=report)
    if g.is_zero:
        report['trace_error'] = 0.0
        return sol

    trace = _circle_trace(sol, params.R0, n_check)
    err = float(np.max(np.abs(trace - g.synthesize(theta_grid(n_check)))))
    report['trace_error'] = err
    if err > 10.0 * tol:
        raise ConvergenceError(f"re-synthesized trace misses g by {err:.2e}", achieved=err, requested=10.0 * tol)
    if err > tol and family == GENERAL:
        sol.warning = True
        logger.warning("general-coefficient expansion residual %.2e exceeds tol %.1e at R0=%.3g", err, tol, params.R0)
    logger.info("homogeneous solve (%s): trace error %.2e", family, err)
    return sol


def solve_nonhomogeneous(f: PiecewiseField, g: FourierBoundary, params: MediumParams, tol: float = 1e-10,
                         trunc: TruncationPolicy = DEFAULT_TRUNCATION,
                         quad: QuadratureSpec = DEFAULT_QUADRATURE,
                         n_boundary: int = 512, n_check: int = CHECK_POINTS) -> SeriesSolution:
    """
    Solve div(a grad u) = div f in B_{R0}, u = g on the circle.

    u = u~ + w with u~ the volume potential of f restricted to B_{R0} and w
    the homogeneous solution with boundary data g - u~.
    """
    if f.is_zero:
        return solve_homogeneous(g, params, tol, trunc, n_check=n_check)
    _check_grid_size(n_boundary)
    R0 = params.R0
    kernel = TransmissionKernel(DISK, params, trunc, PHYSICAL)
    # eta = 1 on B_{R0}; meshes stop at |y| = R0
    particular = ParticularSolution(f, CutoffFunction(outer=2.0 * R0), kernel, quad, support=R0)
    theta = theta_grid(n_boundary)
    u_tilde = particular.value(R0 * np.exp(1j * theta))
    correction = analyze_boundary(g.synthesize(theta) - u_tilde, R0)
    hom = solve_homogeneous(correction, params, tol, trunc, n_check=n_boundary)
    hom.particular = particular
    hom.report['particular_boundary_max'] = float(np.max(np.abs(u_tilde)))
    return hom


@dataclass
class ComposedSolution:
    """Canonical-geometry solution pulled back through a Mobius map."""

    geo: DiskGeometry
    mobius: MobiusMap
    canonical: Any
    R0: float
    report: Dict[str, Any] = field(default_factory=dict)

    def evaluate(self, points, region=None, gradient: bool = True, n_threads: int = 1) -> FieldSample:
        z = as_complex(points)
        if np.any(np.abs(z) > self.R0 * (1.0 + 1e-12)):
            raise DomainError("Points must lie in the closed disk |x| <= R0")
        w = self.mobius.forward(z)
        tags = classify_many(z, self.geo) if region is None else region
        hint = None if region is None else tags
        sample = evaluate_solution(self.canonical, w, hint, gradient, n_threads)
        grad = sample.grad
        if gradient:
            # grad_z u = conj(F'(z)) grad_w v in complex notation
            gw = grad[:, 0] + 1j * grad[:, 1]
            gz = np.conj(self.mobius.derivative(z)) * gw
            grad = np.stack([gz.real, gz.imag], axis=-1)
        tags = np.asarray(tags, dtype=object) if not isinstance(tags, str) else np.full(z.shape, tags, dtype=object)
        return FieldSample(points=z, region=tags, u=sample.u, grad=grad, tail_bound=sample.tail_bound)


def _fit_sources(z_b: np.ndarray, data: np.ndarray, mobius: MobiusMap, kernel: TransmissionKernel, R0: float,
                 tol: float, source_ratio: float = SOURCE_RATIO) -> SourceSolution:
    """
    Least-squares fit of constant + sum_k c_k G(F(z), F(y_k)) to data on |z| = R0.

    Sources y_k sit on a circle just outside B_{R0} in original coordinates,
    short of the map's pole. Their number grows through SOURCE_COUNTS until the
    boundary residual meets tol; columns are scaled to unit max before lstsq.
    """
    w_b = mobius.forward(z_b)
    pole_dist = abs(mobius.pole) if mobius.pole is not None else np.inf
    R_s = min(source_ratio * R0, R0 + 0.5 * (pole_dist - R0))
    scale = max(1.0, float(np.max(np.abs(data))))
    res = np.inf
    for M in SOURCE_COUNTS:
        if 2 * M > len(z_b):
            break
        phi = 2.0 * np.pi * (np.arange(M) + 0.5) / M
        sources = mobius.forward(R_s * np.exp(1j * phi))
        columns = [np.ones(len(z_b))]
        columns += [np.asarray(kernel.value(w_b, s, MATRIX).value, dtype=float) for s in sources]
        A = np.column_stack(columns)
        norms = np.max(np.abs(A), axis=0)
        norms = np.where(norms > 0, norms, 1.0)
        coef, *_ = linalg.lstsq(A / norms, data)
        coef = coef / norms
        res = float(np.max(np.abs(A @ coef - data)))
        logger.debug("source fit: M=%d residual %.2e", M, res)
        if res <= tol * scale:
            logger.info("source fit: M=%d residual %.2e (sources on radius %.4g)", M, res, R_s)
            return SourceSolution(kernel, sources, coef[1:], float(coef[0]),
                                  report={'M': M, 'residual': res, 'source_radius': R_s})
    raise ConvergenceError(f"source fit residual {res:.2e} above {tol:.1e} with {len(z_b)} boundary points",
                           achieved=res, requested=tol * scale)


def unequal_radius_solve(f: Optional[PiecewiseField], g: Callable[[np.ndarray], np.ndarray], geo: DiskGeometry,
                         params: MediumParams, tol: float = 1e-8,
                         trunc: TruncationPolicy = DEFAULT_TRUNCATION,
                         quad: QuadratureSpec = DEFAULT_QUADRATURE,
                         n_boundary: int = 512):
    """
    Solve on B_{R0} with tangent disks of radii r1, r2.

    Equal radii are rescaled to the canonical pair and solved directly. For
    r1 != r2 the Mobius map sends the disks to the unit pair; the homogeneous
    part is a sum of canonical kernels with sources outside B_{R0}, fitted to
    g on |x| = R0. Data f becomes f / conj(F') and its volume potential is
    taken in canonical coordinates.

    Args:
        g: theta -> boundary values on |x| = R0 (original coordinates)

    Raises:
        ConfigError: if an inclusion is not inside B_{R0} or no admissible pole exists
        ConvergenceError: if the boundary fit misses tol with the largest source set
    """
    R0 = params.R0
    if 2.0 * max(geo.r1, geo.r2) >= R0:
        raise ConfigError(f"Inclusions of radii {geo.r1:g}, {geo.r2:g} do not fit inside B_{R0:g}")
    if geo.r1 == geo.r2:
        r = geo.r1
        mobius = MobiusMap(pole=None, lam=1.0 / r, translation=0.0)
        canon = params.with_radius(R0 / r)
        boundary = FourierBoundary.from_callable(g, canon.R0)
        if f is None or f.is_zero:
            sol = solve_homogeneous(boundary, canon, tol, trunc)
        else:
            sol = solve_nonhomogeneous(_pushed_field(f, mobius, R0), boundary,
                                       canon, tol, trunc, quad, n_boundary)
        return ComposedSolution(geo, mobius, sol, R0, report={'map': mobius.to_dict()})

    _check_grid_size(n_boundary)
    mobius = equal_radius_map(geo, exclusion=(0.0, R0))
    center, radius = mobius.image_circle(0.0, R0)
    R_img = abs(center) + radius
    canon = params.with_radius(R_img)
    theta = theta_grid(n_boundary)
    z_b = R0 * np.exp(1j * theta)
    data = np.asarray(g(theta), dtype=float)

    particular = None
    if f is not None and not f.is_zero:
        kernel = TransmissionKernel(DISK, canon, trunc, PHYSICAL)
        particular = ParticularSolution(_pushed_field(f, mobius, R0), CutoffFunction(outer=2.0 * R_img),
                                        kernel, quad, support=R_img)
        data = data - particular.value(mobius.forward(z_b), MATRIX)

    sol = _fit_sources(z_b, data, mobius, TransmissionKernel(DISK, canon, trunc, LOGARITHMIC), R0, tol)
    sol.particular = particular
    report = {
        'map': mobius.to_dict(),
        'image_center_x1': float(center.real),
        'image_center_x2': float(center.imag),
        'image_radius': radius,
        'boundary_fit': sol.report,
    }
    return ComposedSolution(geo, mobius, sol, R0, report=report)


def _pushed_field(f: PiecewiseField, mobius: MobiusMap, R0: float) -> PiecewiseField:
    """f transported to canonical coordinates: f_hat(w) = f(z) / conj(F'(z)) on F(B_{R0})."""
    comps = {}
    for region in f.components:
        def fn(w, region=region):
            w = np.asarray(w, dtype=complex)
            z = mobius.inverse(w)
            out = f.on(region, z) / np.conj(mobius.derivative(z))
            return np.where(np.abs(z) < R0, out, 0.0)

        comps[region] = fn
    return PiecewiseField(comps, f.kind)


def cusp_gradient_profile(sol: SeriesSolution, m_max: int = 20, m_min: int = 1) -> Dict[str, Any]:
    """
    |grad u| along (0, 2^-m), (0, -2^-m) and (2^-m, 0).

    Returns:
        Report with a DataFrame of samples, the max/min ratio per approach
        and a pass flag (ratio < 10 and no monotone growth)
    """
    ms = np.arange(m_min, m_max + 1)
    t = 2.0 ** (-ms.astype(float))
    paths = {INCLUSION1: 1j * t, INCLUSION2: -1j * t, MATRIX: t.astype(complex)}
    rows = []
    summary = {}
    passed = True
    for region, pts in paths.items():
        sample = evaluate_solution(sol, pts, region=region)
        mag = np.hypot(sample.grad[:, 0], sample.grad[:, 1])
        for m, p, v in zip(ms, pts, mag):
            rows.append({'m': int(m), 'x1': p.real, 'x2': p.imag, 'region': region, 'grad_norm': float(v)})
        lo = float(np.min(mag))
        ratio = float(np.max(mag) / lo) if lo > 0 else (1.0 if np.max(mag) == 0 else float('inf'))
        increments = np.diff(mag)
        blowup = bool(len(increments) > 0 and np.all(increments > 0) and ratio >= 2.0)
        ok = ratio < 10.0 and not blowup
        summary[region] = {'ratio': ratio, 'monotone_growth': blowup, 'passed': ok}
        passed = passed and ok
    return {'samples': pd.DataFrame(rows), 'paths': summary, 'passed': passed}
