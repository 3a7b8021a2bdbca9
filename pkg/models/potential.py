"""
Layer Potentials and Particular Solutions of the Nonhomogeneous Problem

Implements:
- PiecewiseField: vector or scalar data given per region as closures
- CutoffFunction: smooth eta equal to 1 on B_{l/2} and 0 outside B_l
- Quadrature meshes over the two inclusions and the matrix (strip coordinates)
- log_layer: h(x) = int_B grad_y log|x - y| . f dy and the log-charge layer,
  with a polar patch about evaluation points inside the region
- reflected_sum_w: the image series of layer potentials evaluated at X_k(x)
- direct_w: the same quantity by quadrature of the kernel gradient
- volume_solution: particular solution u~ = -int grad_y G . f~ + G s dy
"""

import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy.special import roots_legendre

from geometry.maps import POLE_TOL, classify_many
from models.greens import (
    CUSP_TOL, DISK, PHYSICAL, TransmissionKernel, image_terms, source_gradients,
)
from models.medium import (
    INCLUSION1, INCLUSION2, MATRIX, BULK_REGIONS, ConfigError, ConvergenceError,
    DomainError, MediumParams, SeriesValue, TruncationPolicy, as_complex,
)

logger = logging.getLogger(__name__)

VECTOR = 'vector'
SCALAR = 'scalar'
DIPOLE = 'dipole'
CHARGE = 'charge'

BRANCHES = {'w1': INCLUSION1, 'w2': INCLUSION2, 'w3': MATRIX}
_CENTERS = {INCLUSION1: 1j, INCLUSION2: -1j}
_CHUNK = 256


def _psi0(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t, dtype=float)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def _dpsi0(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t, dtype=float)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos]) / t[pos] ** 2
    return out


def smooth_step(t: np.ndarray) -> np.ndarray:
    """C-infinity step: 1 for t <= 0, 0 for t >= 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    A = _psi0(1.0 - t)
    B = _psi0(t)
    return A / (A + B)


def smooth_step_derivative(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    inside = (t > 0) & (t < 1)
    tc = np.clip(t, 0.0, 1.0)
    A, B = _psi0(1.0 - tc), _psi0(tc)
    dA, dB = -_dpsi0(1.0 - tc), _dpsi0(tc)
    den = (A + B) ** 2
    out = np.zeros_like(tc)
    out[inside] = (dA * B - A * dB)[inside] / den[inside]
    return out


@dataclass(frozen=True)
class CutoffFunction:
    """
    Radial cutoff eta with eta = 1 on B_{l/2} and eta = 0 outside B_l.

    Args:
        outer: Support radius l
    """

    outer: float = 2.5

    def __post_init__(self):
        if not self.outer > 0:
            raise ConfigError("cutoff radius must be positive")

    @property
    def inner(self) -> float:
        return self.outer / 2.0

    def _t(self, r: np.ndarray) -> np.ndarray:
        return (r - self.inner) / (self.outer - self.inner)

    def value(self, points) -> np.ndarray:
        z = as_complex(points)
        return smooth_step(self._t(np.abs(z)))

    def gradient(self, points) -> np.ndarray:
        """Complex gradient d/dx1 + i d/dx2."""
        z = as_complex(points)
        r = np.abs(z)
        d = smooth_step_derivative(self._t(r)) / (self.outer - self.inner)
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, d * z / safe, 0.0)

    def derivative_bound(self) -> float:
        """sup |grad eta| estimated on a fine radial grid."""
        t = np.linspace(0.0, 1.0, 4001)
        return float(np.max(np.abs(smooth_step_derivative(t)))) / (self.outer - self.inner)


@dataclass
class PiecewiseField:
    """
    Data given separately on each region.

    Vector fields return f1 + i f2 as complex arrays; scalar fields return real
    arrays. Regions without a component carry zero data. No continuity across
    interfaces is assumed.
    """

    components: Dict[str, Callable[[np.ndarray], np.ndarray]] = field(default_factory=dict)
    kind: str = VECTOR
    smoothness: Dict[str, Tuple[int, float]] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in (VECTOR, SCALAR):
            raise ConfigError(f"Unknown field kind: {self.kind}")
        for region in self.components:
            if region not in BULK_REGIONS:
                raise ConfigError(f"Unknown field region {region!r}")

    @classmethod
    def zero(cls, kind: str = VECTOR) -> 'PiecewiseField':
        return cls({}, kind)

    @classmethod
    def constant(cls, values: Dict[str, complex], kind: str = VECTOR) -> 'PiecewiseField':
        """Piecewise-constant data, e.g. {'inclusion1': 1 + 0j}."""
        dtype = complex if kind == VECTOR else float
        comps = {
            region: (lambda z, v=v: np.full(np.shape(z), v, dtype=dtype))
            for region, v in values.items()
        }
        return cls(comps, kind)

    @classmethod
    def uniform(cls, fn: Callable[[np.ndarray], np.ndarray], kind: str = VECTOR) -> 'PiecewiseField':
        """The same closure on every region."""
        return cls({region: fn for region in BULK_REGIONS}, kind)

    @property
    def is_zero(self) -> bool:
        return not self.components

    def on(self, region: str, z: np.ndarray) -> np.ndarray:
        fn = self.components.get(region)
        dtype = complex if self.kind == VECTOR else float
        if fn is None:
            return np.zeros(np.shape(z), dtype=dtype)
        return np.asarray(fn(z), dtype=dtype)

    def __call__(self, points, regions=None) -> np.ndarray:
        z = as_complex(points)
        tags = classify_many(z) if regions is None else np.asarray(regions, dtype=object)
        out = np.zeros(z.shape, dtype=complex if self.kind == VECTOR else float)
        for region in BULK_REGIONS:
            mask = tags == region
            if np.any(mask):
                out[mask] = self.on(region, z[mask])
        return out

    def scaled(self, c: float) -> 'PiecewiseField':
        return PiecewiseField(
            {r: (lambda z, fn=fn: c * np.asarray(fn(z))) for r, fn in self.components.items()},
            self.kind, dict(self.smoothness),
        )

    def __add__(self, other: 'PiecewiseField') -> 'PiecewiseField':
        if other.kind != self.kind:
            raise ConfigError("Cannot add vector and scalar fields")
        comps = {}
        for region in set(self.components) | set(other.components):
            comps[region] = (lambda z, r=region: self.on(r, z) + other.on(r, z))
        return PiecewiseField(comps, self.kind)


@dataclass(frozen=True)
class QuadratureSpec:
    """
    Node counts of the region meshes and of the polar patch.

    Args:
        n_radial, n_angular: Gauss-Legendre radial and trapezoid angular nodes per inclusion
        n_strip_s, n_strip_u: Nodes across and along the matrix strip
        n_patch_radial, n_patch_angular: Polar patch about interior evaluation points
        patch_radius: Largest patch radius
        patch_min: Interior points closer than this to the region boundary get no patch
        tol: Requested accuracy for the mesh-doubling estimate
        max_refinements: Uniform doublings tried before the estimate is reported as missed
    """

    n_radial: int = 48
    n_angular: int = 96
    n_strip_s: int = 32
    n_strip_u: int = 48
    n_patch_radial: int = 16
    n_patch_angular: int = 32
    patch_radius: float = 0.25
    patch_min: float = 1e-3
    tol: float = 1e-6
    max_refinements: int = 1

    def __post_init__(self):
        counts = (self.n_radial, self.n_angular, self.n_strip_s, self.n_strip_u,
                  self.n_patch_radial, self.n_patch_angular)
        if min(counts) < 2:
            raise ConfigError("Quadrature node counts must be at least 2")
        if self.max_refinements < 1:
            raise ConfigError("max_refinements must be at least 1")

    def refined(self) -> 'QuadratureSpec':
        return replace(
            self,
            n_radial=2 * self.n_radial, n_angular=2 * self.n_angular,
            n_strip_s=2 * self.n_strip_s, n_strip_u=2 * self.n_strip_u,
            n_patch_radial=2 * self.n_patch_radial, n_patch_angular=2 * self.n_patch_angular,
        )


DEFAULT_QUADRATURE = QuadratureSpec()


@dataclass(frozen=True)
class QuadratureMesh:
    region: str
    nodes: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.nodes)


@lru_cache(maxsize=32)
def build_mesh(region: str, support: float, spec: QuadratureSpec) -> QuadratureMesh:
    """
    Quadrature nodes and weights over region intersected with B_support.

    Inclusions use polar Gauss-Legendre x trapezoid grids about the disk
    centers. The matrix is meshed in w = i/y, where it becomes the strip
    |Re w| < 1/2 minus the disk |w| <= 1/support.
    """
    if region in _CENTERS:
        t, wt = roots_legendre(spec.n_radial)
        rho = (t + 1.0) / 2.0
        w_rho = wt / 2.0
        phi = 2.0 * np.pi * np.arange(spec.n_angular) / spec.n_angular
        R, P = np.meshgrid(rho, phi, indexing='ij')
        nodes = _CENTERS[region] + R * np.exp(1j * P)
        weights = (w_rho[:, None] * rho[:, None]) * np.full(P.shape, 2.0 * np.pi / spec.n_angular)
    elif region == MATRIX:
        ts, ws = roots_legendre(spec.n_strip_s)
        s = ts / 2.0
        w_s = ws / 2.0
        tu, wu = roots_legendre(spec.n_strip_u)
        u = (tu + 1.0) / 2.0
        w_u = wu / 2.0
        tau0 = np.sqrt(np.maximum(1.0 / support ** 2 - s ** 2, 0.0))
        S, U = np.meshgrid(s, u, indexing='ij')
        tau = tau0[:, None] + U / (1.0 - U)
        jac = (w_s[:, None] * w_u[None, :]) / (1.0 - U) ** 2
        parts_n, parts_w = [], []
        for sign in (1.0, -1.0):
            w = S + 1j * sign * tau
            parts_n.append(1j / w)
            parts_w.append(jac / np.abs(w) ** 4)
        nodes = np.concatenate([p.ravel() for p in parts_n])
        weights = np.concatenate([p.ravel() for p in parts_w])
    else:
        raise DomainError(f"Unknown region {region!r}")
    nodes = nodes.ravel()
    weights = weights.ravel()
    keep = np.abs(nodes) < support
    logger.debug("mesh %s: %d nodes (support %.3g)", region, int(keep.sum()), support)
    return QuadratureMesh(region, nodes[keep], weights[keep])


def interior_distance(region: str, z: np.ndarray) -> np.ndarray:
    """Distance to the region boundary, positive inside the region."""
    d1 = np.abs(z - 1j) - 1.0
    d2 = np.abs(z + 1j) - 1.0
    if region == INCLUSION1:
        return -d1
    if region == INCLUSION2:
        return -d2
    return np.minimum(d1, d2)


def _disk_moments(z: np.ndarray, center: complex, radius: float) -> Tuple[np.ndarray, np.ndarray]:
    # int_D log|z - y| dy and int_D grad_y log|z - y| dy (as a complex vector)
    d = z - center
    ad = np.abs(d)
    inside = ad < radius
    ad_safe = np.where(ad > 0, ad, 1.0)
    log_int = np.where(
        inside,
        np.pi * (ad ** 2 - radius ** 2) / 2.0 + np.pi * radius ** 2 * np.log(radius),
        np.pi * radius ** 2 * np.log(ad_safe),
    )
    grad_int = np.where(inside, -np.pi * d, -np.pi * radius ** 2 * d / ad_safe ** 2)
    return log_int, grad_int


def region_moments(region: str, z: np.ndarray, support: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Exact layers of the unit density over region intersected with B_support.

    Returns (int log|z - y| dy, int grad_y log|z - y| dy), the second as a
    complex vector. The matrix part is B_support minus both disks, so support
    must be at least 2.
    """
    if region in _CENTERS:
        return _disk_moments(z, _CENTERS[region], 1.0)
    if region != MATRIX:
        raise DomainError(f"Unknown region {region!r}")
    if support < 2.0:
        raise ConfigError("Matrix moments need the support ball to contain both disks")
    log_int, grad_int = _disk_moments(z, 0j, support)
    for center in _CENTERS.values():
        lg, gr = _disk_moments(z, center, 1.0)
        log_int = log_int - lg
        grad_int = grad_int - gr
    return log_int, grad_int


def _anchor_points(region: str, z: np.ndarray, support: float) -> np.ndarray:
    """Nearest point of region intersected with B_support; z itself when inside."""
    out = z.copy()
    if region in _CENTERS:
        disks = [_CENTERS[region]]
    else:
        disks = list(_CENTERS.values())
        far = np.abs(z) >= support
        out[far] = support * z[far] / np.abs(z[far])
    for center in disks:
        d = z - center
        ad = np.abs(d)
        if region in _CENTERS:
            move = ad > 1.0
        else:
            move = ad < 1.0
        move &= ad > 0
        out[move] = center + d[move] / ad[move]
    return out


def _anchor_values(points: np.ndarray, region: str, data: PiecewiseField, support: float) -> np.ndarray:
    if support < 2.0:
        return np.zeros(points.shape, dtype=complex if data.kind == VECTOR else float)
    return data.on(region, _anchor_points(region, points, support))


def _layer_values(points: np.ndarray, region: str, data: PiecewiseField, kind: str,
                  support: float, spec: QuadratureSpec) -> np.ndarray:
    mesh = build_mesh(region, support, spec)
    fvals = data.on(region, mesh.nodes)
    out = np.zeros(points.shape)
    if not np.any(fvals):
        return out

    # the anchor value times the exact unit-density layer is added back below,
    # so the mesh only sees f(y) - f(anchor), which vanishes at the anchor
    anchor = _anchor_values(points, region, data, support)
    dist = interior_distance(region, points)
    delta = np.where(dist >= spec.patch_min, np.minimum(spec.patch_radius, 0.9 * dist), 0.0)

    for start in range(0, len(points), _CHUNK):
        p = points[start:start + _CHUNK, None]
        dl = delta[start:start + _CHUNK, None]
        fw = (fvals[None, :] - anchor[start:start + _CHUNK, None]) * mesh.weights[None, :]
        diff = p - mesh.nodes[None, :]
        ad = np.abs(diff)
        ad_safe = np.where(ad > 0, ad, 1.0)
        # partition of unity: mesh keeps 1 - bump, the patch integrates the bump
        keep = np.where(dl > 0, 1.0 - smooth_step(2.0 * ad_safe / np.where(dl > 0, dl, 1.0) - 1.0), 1.0)
        keep = np.where(ad > 0, keep, 0.0)
        if kind == DIPOLE:
            integrand = np.real(-fw / np.where(ad > 0, diff, 1.0))
        else:
            integrand = np.log(ad_safe) * fw
        out[start:start + _CHUNK] = np.sum(integrand * keep, axis=1)

    inside = delta > 0
    if np.any(inside):
        out[inside] += _patch_values(points[inside], delta[inside], anchor[inside], region, data, kind,
                                     support, spec)
    if support >= 2.0:
        log_int, grad_int = region_moments(region, points, support)
        if kind == DIPOLE:
            out += np.real(np.conj(grad_int) * anchor)
        else:
            out += np.real(anchor) * log_int
    return out


def _patch_values(points: np.ndarray, delta: np.ndarray, anchor: np.ndarray, region: str,
                  data: PiecewiseField, kind: str, support: float, spec: QuadratureSpec) -> np.ndarray:
    t, wt = roots_legendre(spec.n_patch_radial)
    frac = (t + 1.0) / 2.0
    theta = 2.0 * np.pi * np.arange(spec.n_patch_angular) / spec.n_patch_angular
    d_theta = 2.0 * np.pi / spec.n_patch_angular
    e = np.exp(1j * theta)
    bump = smooth_step(2.0 * frac - 1.0)

    r = delta[:, None, None] * frac[None, :, None]
    y = points[:, None, None] + r * e[None, None, :]
    vals = data.on(region, y.ravel()).reshape(y.shape)
    vals = np.where(np.abs(y) < support, vals - anchor[:, None, None], 0.0)
    w_r = (delta[:, None] * wt[None, :] / 2.0)[:, :, None] * d_theta
    if kind == DIPOLE:
        # grad_y log|p - y| . f * r = Re(f e^{-i theta}) in polar coordinates about p
        integrand = np.real(vals * np.conj(e)[None, None, :])
    else:
        integrand = np.log(r) * r * vals
    return np.sum(integrand * bump[None, :, None] * w_r, axis=(1, 2))


def _estimated_layer(points: np.ndarray, region: str, data: PiecewiseField, kind: str,
                     support: float, quad: QuadratureSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Layer values on uniformly doubled meshes and the last doubling difference."""
    value = _layer_values(points, region, data, kind, support, quad)
    err = np.zeros(points.shape)
    spec = quad
    for level in range(quad.max_refinements):
        spec = spec.refined()
        fine = _layer_values(points, region, data, kind, support, spec)
        err = np.abs(fine - value)
        value = fine
        if np.max(err, initial=0.0) <= quad.tol:
            break
        logger.debug("layer %s: doubling %d changed values by %.2e", region, level + 1, np.max(err))
    return value, err


def log_layer(x, region: str, data: PiecewiseField, quad: QuadratureSpec = DEFAULT_QUADRATURE,
              support: float = 2.5, reflected: bool = False) -> SeriesValue:
    """
    Layer potential of region data.

    For vector data, h(x) = int_region grad_y log|x - y| . f(y) dy; for scalar
    data, g(x) = int_region log|x - y| s(y) dy. The reflected variant uses
    log|x - conj(y)|, which equals the plain layer at conj(x).

    The mesh is doubled up to quad.max_refinements times; the last change is
    the reported error.

    Args:
        x: Evaluation point(s)
        region: Region integrated over
        data: Field on that region
        quad: Mesh resolution
        support: Radius l of the ball the data lives in
        reflected: Use the conj(y) kernel

    Returns:
        SeriesValue with the quadrature error estimate as tail_bound

    Raises:
        ConvergenceError: if the mesh-doubling estimate still exceeds quad.tol
    """
    if region not in BULK_REGIONS:
        raise DomainError(f"Unknown region {region!r}")
    z = as_complex(x)
    if reflected:
        z = np.conj(z)
    kind = DIPOLE if data.kind == VECTOR else CHARGE
    value, err = _estimated_layer(z, region, data, kind, support, quad)
    if np.max(err, initial=0.0) > quad.tol:
        raise ConvergenceError(
            f"Quadrature mesh too coarse: doubling changed the layer by {np.max(err):.2e}",
            achieved=float(np.max(err)), requested=quad.tol,
        )
    return SeriesValue(value=value, tail_bound=err, terms_used=len(build_mesh(region, support, quad)))


def _field_tags(z: np.ndarray, region_x) -> np.ndarray:
    if np.any(np.abs(z) <= CUSP_TOL):
        raise DomainError("Evaluation point is within the cusp tolerance of the tangency point")
    if region_x is None:
        tags = classify_many(z)
    elif isinstance(region_x, str):
        tags = np.full(z.shape, region_x, dtype=object)
    else:
        tags = np.asarray(region_x, dtype=object)
    if not np.all(np.isin(tags, BULK_REGIONS)):
        raise DomainError("Evaluation point on an interface needs an explicit region hint")
    return tags


def _sup_bound(region: str, data: PiecewiseField, support: float, quad: QuadratureSpec) -> float:
    mesh = build_mesh(region, support, quad)
    fmax = float(np.max(np.abs(data.on(region, mesh.nodes)), initial=0.0))
    R = support + 2.0
    if data.kind == VECTOR:
        return fmax * 2.0 * np.pi * R
    return fmax * (np.pi * R * R * np.log(R) + np.pi)


def reflected_sum_w(x, branch: str, data: PiecewiseField, params: MediumParams,
                    trunc: TruncationPolicy = TruncationPolicy(), quad: QuadratureSpec = DEFAULT_QUADRATURE,
                    support: float = 2.5, region_x=None) -> SeriesValue:
    """
    Image series of layer potentials for one source region.

    w_b(x) = sum_t c_t L_b(P_t(x)) with P_t = X_{k_t}(x), conjugated for
    reflected terms, and (c_t, k_t) the disk kernel's image table. This is
    int_{B_b} grad_y G(x, y) . f dy (or int G s dy for scalar data) in the
    logarithmic normalization. tail_bound carries the image-series tail plus
    the mesh-doubling estimate weighted by |c_t|.

    Args:
        branch: 'w1', 'w2' or 'w3' for sources in inclusion 1, inclusion 2 or the matrix
    """
    if branch not in BRANCHES:
        raise ConfigError(f"Unknown branch {branch!r}")
    rb = BRANCHES[branch]
    z = as_complex(x)
    tags = _field_tags(z, region_x)
    out = np.zeros(z.shape)
    tails = np.zeros(z.shape)
    terms_used = 0
    if rb not in data.components:
        return SeriesValue(value=out, tail_bound=tails, terms_used=0)

    r = abs(params.rho)
    sup_h = _sup_bound(rb, data, support, quad)
    kind = DIPOLE if data.kind == VECTOR else CHARGE

    def tail(K: int) -> float:
        if r == 0.0 and K >= 1:
            return 0.0
        return 16.0 * r ** K * sup_h / (1.0 - r)

    for rx in BULK_REGIONS:
        mask = tags == rx
        if not np.any(mask):
            continue
        K = trunc.choose_terms(tail, k_min=1)
        w, s, refl = image_terms(rx, rb, params, K)
        live = w != 0.0
        w, s, refl = w[live], s[live], refl[live]
        zr = z[mask][:, None]
        den = 1.0 - 1j * s[None, :] * zr
        if np.any(np.abs(den) <= POLE_TOL * np.maximum(1.0, np.abs(s[None, :] * zr))):
            raise DomainError("Evaluation point hits the pole of an X_k map")
        P = zr / den
        if np.any(np.abs(P) <= CUSP_TOL):
            raise DomainError("Image point falls within the cusp tolerance")
        P = np.where(refl[None, :], np.conj(P), P)
        vals, err = _estimated_layer(P.ravel(), rb, data, kind, support, quad)
        vals, err = vals.reshape(P.shape), err.reshape(P.shape)
        quad_err = err @ np.abs(w)
        if np.max(quad_err) > quad.tol:
            logger.warning("reflected sum %s: quadrature estimate %.2e above tol %.1e at %s points",
                           branch, float(np.max(quad_err)), quad.tol, rx)
        out[mask] = vals @ w
        tails[mask] = tail(K) + quad_err
        terms_used = max(terms_used, len(w))
        logger.debug("reflected sum %s at %d %s points: K=%d", branch, int(mask.sum()), rx, K)
    return SeriesValue(value=out, tail_bound=tails, terms_used=terms_used)


def direct_w(x, branch: str, data: PiecewiseField, kernel: TransmissionKernel,
             quad: QuadratureSpec = DEFAULT_QUADRATURE, support: float = 2.5, region_x=None) -> SeriesValue:
    """
    int_{B_b} grad_y G(x, y) . f(y) dy by quadrature of the kernel gradient.

    Inside the source region the free-space part f(x) . grad_y log|x - y| is
    subtracted under a radial bump; it integrates to zero by oddness.
    """
    if kernel.geometry != DISK:
        raise ConfigError("direct_w needs a disk kernel")
    if data.kind != VECTOR:
        raise ConfigError("direct_w integrates vector data")
    rb = BRANCHES[branch]
    mesh = build_mesh(rb, support, quad)
    fvals = data.on(rb, mesh.nodes)
    z = as_complex(x)
    tags = _field_tags(z, region_x)
    log_kernel = kernel.with_normalization('log')
    out = np.zeros(z.shape)
    tails = np.zeros(z.shape)
    terms_used = 0
    for i, (zi, rx) in enumerate(zip(z, tags)):
        grads = source_gradients(log_kernel, zi, mesh.nodes, region_x=str(rx))
        integrand = np.real(np.conj(fvals) * grads.value)
        if rx == rb:
            dist = float(interior_distance(rb, np.array([zi]))[0])
            if dist >= quad.patch_min:
                delta = min(quad.patch_radius, 0.9 * dist)
                diff = zi - mesh.nodes
                bump = smooth_step(2.0 * np.abs(diff) / delta - 1.0)
                fx = data.on(rb, np.array([zi]))[0]
                integrand = integrand - bump * np.real(-fx / diff)
        out[i] = np.sum(integrand * mesh.weights)
        tails[i] = float(np.sum(np.abs(fvals) * grads.tail_bound * mesh.weights))
        terms_used = max(terms_used, grads.terms_used)
    return SeriesValue(value=out, tail_bound=tails, terms_used=terms_used)


@dataclass
class RingData:
    """Values and complex gradients of a solution on the cutoff ring l/2 < |x| < l."""

    u: Callable[[np.ndarray], np.ndarray]
    grad_u: Callable[[np.ndarray], np.ndarray]


def build_modified_field(data: PiecewiseField, cutoff: CutoffFunction, params: MediumParams,
                         ring: Optional[RingData] = None) -> Tuple[PiecewiseField, Optional[PiecewiseField]]:
    """
    Cut-off data f~ = f eta + a u grad eta and the scalar remainder s = f . grad eta - a grad u . grad eta.

    Without ring data only f eta is returned and s is None.
    """
    if data.kind != VECTOR:
        raise ConfigError("The right-hand side is a vector field")
    vec, scal = {}, {}
    for region in BULK_REGIONS:
        a = params.coefficient(region)

        def ftilde(z, region=region, a=a):
            out = data.on(region, z) * cutoff.value(z)
            if ring is not None:
                out = out + a * np.asarray(ring.u(z)) * cutoff.gradient(z)
            return out

        vec[region] = ftilde
        if ring is not None:
            def source(z, region=region, a=a):
                g = cutoff.gradient(z)
                f_dot = np.real(np.conj(data.on(region, z)) * g)
                u_dot = np.real(np.conj(np.asarray(ring.grad_u(z), dtype=complex)) * g)
                return f_dot - a * u_dot

            scal[region] = source
    modified = PiecewiseField(vec, VECTOR, dict(data.smoothness))
    return modified, (PiecewiseField(scal, SCALAR) if ring is not None else None)


def volume_solution(x, data: PiecewiseField, cutoff: CutoffFunction, kernel: TransmissionKernel,
                    quad: QuadratureSpec = DEFAULT_QUADRATURE, ring: Optional[RingData] = None,
                    region_x=None, support: Optional[float] = None) -> SeriesValue:
    """
    Particular solution u~ = -int grad_y G . f~ dy - int G s dy.

    G is the physical disk kernel, so div(a grad u~) = div f~ - s. Without
    ring data this is the plain volume potential of f eta. Meshes cover
    B_support, which defaults to the cutoff outer radius.

    Raises:
        ConfigError: kernel not in the physical normalization or not a disk kernel
    """
    if kernel.normalization != PHYSICAL:
        raise ConfigError("volume_solution needs the physical kernel normalization")
    if kernel.geometry != DISK:
        raise ConfigError("volume_solution needs a disk kernel")
    z = as_complex(x)
    if data.is_zero and ring is None:
        return SeriesValue(value=np.zeros(z.shape), tail_bound=np.zeros(z.shape), terms_used=0)

    params = kernel.params
    ftilde, source = build_modified_field(data, cutoff, params, ring)
    radius = cutoff.outer if support is None else support
    total = np.zeros(z.shape)
    tails = np.zeros(z.shape)
    terms_used = 0
    for branch, region in BRANCHES.items():
        scale = 1.0 / (2.0 * np.pi * params.coefficient(region))
        parts = [ftilde] if source is None else [ftilde, source]
        for part in parts:
            w = reflected_sum_w(z, branch, part, params, kernel.trunc, quad, radius, region_x)
            total -= scale * w.value
            tails += scale * w.tail_bound
            terms_used = max(terms_used, w.terms_used)
    return SeriesValue(value=total, tail_bound=tails, terms_used=terms_used)


def volume_gradient(x, data: PiecewiseField, cutoff: CutoffFunction, kernel: TransmissionKernel,
                    quad: QuadratureSpec = DEFAULT_QUADRATURE, ring: Optional[RingData] = None,
                    region_x=None, step: float = 1e-5, support: Optional[float] = None) -> np.ndarray:
    """Central-difference gradient of volume_solution as an (n, 2) array."""
    z = as_complex(x)
    tags = _field_tags(z, region_x)
    cols = []
    for dz in (step, 1j * step):
        plus = volume_solution(z + dz, data, cutoff, kernel, quad, ring, tags, support).value
        minus = volume_solution(z - dz, data, cutoff, kernel, quad, ring, tags, support).value
        cols.append((plus - minus) / (2.0 * step))
    return np.stack(cols, axis=-1)
