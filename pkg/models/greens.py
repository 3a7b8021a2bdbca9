"""
Transmission Green's Functions for the Strip and the Tangent Disks

Implements:
- One image table (weight, shift k, reflected flag) per (x-region, y-region) pair
- The strip kernel G~ built from log|x + k - y| and log|x + k + conj(y)| terms
- The disk kernel G built from log|X_k(x) - y| and log|X_k(x) - conj(y)| terms
- Gradients in the source and field variables
- The strip/disk correspondence G(Theta(x), y) = G~(x, Theta(y)) - H(x) + c log|y|
- Logarithmic normalization (Delta G = 2 pi delta) and physical normalization (div(a grad G) = delta)
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
import pandas as pd

from geometry.maps import DEFAULT_BAND, POLE_TOL, classify_many, theta_c
from models.basis import _is_single
from models.coeffmatrix import write_csv
from models.medium import (
    INCLUSION1, INCLUSION2, MATRIX, ConfigError, DomainError, MediumParams,
    SeriesValue, TruncationPolicy, as_complex,
)

logger = logging.getLogger(__name__)

STRIP = 'strip'
DISK = 'disk'
LOGARITHMIC = 'log'
PHYSICAL = 'physical'
CUSP_TOL = 1e-10
COINCIDENCE_TOL = 1e-14

_MIRROR = {INCLUSION1: INCLUSION2, INCLUSION2: INCLUSION1, MATRIX: MATRIX}


def _canonical_table(region_x: str, region_y: str, a: float, b: float, K: int):
    """Image terms for a source in the matrix or the first inclusion."""
    rho = a * b
    weights, shifts, refl = [], [], []

    def add(w, k, r):
        weights.append(w)
        shifts.append(k)
        refl.append(r)

    if region_y == MATRIX:
        if region_x == MATRIX:
            add(1.0, 0, False)
            for k in range(1, K + 1):
                add(rho ** k, 2 * k, False)
                add(rho ** k, -2 * k, False)
                add(-b * rho ** (k - 1), 2 * k - 1, True)
                add(-a * rho ** (k - 1), -(2 * k - 1), True)
        elif region_x == INCLUSION1:
            for k in range(K + 1):
                add((1.0 - a) * rho ** k, 2 * k, False)
                add(-b * (1.0 - a) * rho ** k, 2 * k + 1, True)
        else:
            raise ValueError("mirror case")
    elif region_y == INCLUSION1:
        if region_x == INCLUSION1:
            add(1.0, 0, False)
            add(a, -1, True)
            for k in range(K + 1):
                add(-(1.0 + a) * (1.0 - a) * b * rho ** k, 2 * k + 1, True)
        elif region_x == MATRIX:
            for k in range(K + 1):
                add((1.0 + a) * rho ** k, -2 * k, False)
                add(-b * (1.0 + a) * rho ** k, 2 * k + 1, True)
        else:
            for k in range(K + 1):
                add((1.0 + a) * (1.0 - b) * rho ** k, -2 * k, False)
    else:
        raise ValueError("mirror case")
    return np.array(weights, dtype=float), np.array(shifts, dtype=int), np.array(refl, dtype=bool)


def image_terms(region_x: str, region_y: str, params: MediumParams, K: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Image table shared by the strip and disk kernels.

    Args:
        region_x: Bulk region of the field point
        region_y: Bulk region of the source point
        params: Medium parameters
        K: Last image group kept; group k carries weights O(|alpha beta|^(k-1))

    Returns:
        (weights, shifts, reflected) arrays of equal length
    """
    for reg in (region_x, region_y):
        if reg not in _MIRROR:
            raise DomainError(f"Unknown region {reg!r}")
    if K < 0:
        raise ConfigError("K must be non-negative")
    a, b = params.alpha, params.beta
    mirrored = region_y == INCLUSION2 or (region_y == MATRIX and region_x == INCLUSION2)
    if mirrored:
        w, s, r = _canonical_table(_MIRROR[region_x], _MIRROR[region_y], b, a, K)
        return w, -s, r
    return _canonical_table(region_x, region_y, a, b, K)


def correspondence_constant(region_y: str, params: MediumParams) -> float:
    """Sum of all image weights for a source region; the log|y| coefficient of the correspondence."""
    a, b = params.alpha, params.beta
    denom = 1.0 - a * b
    if region_y == INCLUSION1:
        return (1.0 + a) * (1.0 - b) / denom
    if region_y == INCLUSION2:
        return (1.0 + b) * (1.0 - a) / denom
    if region_y == MATRIX:
        return (1.0 - a) * (1.0 - b) / denom
    raise DomainError(f"Unknown region {region_y!r}")


def strip_regions(z: np.ndarray, band: float = DEFAULT_BAND) -> np.ndarray:
    """Region tags in the strip picture; points within band of x1 = +-1/2 are interface points."""
    x1 = np.real(z)
    tags = np.full(z.shape, MATRIX, dtype=object)
    tags[x1 > 0.5] = INCLUSION1
    tags[x1 < -0.5] = INCLUSION2
    tags[np.abs(x1 - 0.5) <= band] = 'interface1'
    tags[np.abs(x1 + 0.5) <= band] = 'interface2'
    return tags


@dataclass(frozen=True)
class TransmissionKernel:
    """
    Evaluator for the strip kernel G~ or the disk kernel G.

    Args:
        geometry: 'strip' or 'disk'
        params: Medium parameters (alpha, beta from a0, b0)
        trunc: Truncation of the image groups
        normalization: 'log' keeps log|x - y| near the source; 'physical'
            divides by 2 pi a(y) so that div(a grad G) is the unit point charge
        band: Interface half-width used when no region hint is given
    """

    geometry: str = DISK
    params: MediumParams = field(default_factory=MediumParams)
    trunc: TruncationPolicy = field(default_factory=TruncationPolicy)
    normalization: str = LOGARITHMIC
    band: float = DEFAULT_BAND

    def __post_init__(self):
        if self.geometry not in (STRIP, DISK):
            raise ConfigError(f"Unknown kernel geometry: {self.geometry}")
        if self.normalization not in (LOGARITHMIC, PHYSICAL):
            raise ConfigError(f"Unknown normalization: {self.normalization}")

    @property
    def rho(self) -> float:
        return self.params.rho

    def with_normalization(self, normalization: str) -> 'TransmissionKernel':
        return TransmissionKernel(self.geometry, self.params, self.trunc, normalization, self.band)

    def with_truncation(self, trunc: TruncationPolicy) -> 'TransmissionKernel':
        return TransmissionKernel(self.geometry, self.params, trunc, self.normalization, self.band)

    def scale(self, region_y: str) -> float:
        if self.normalization == LOGARITHMIC:
            return 1.0
        return 1.0 / (2.0 * np.pi * self.params.coefficient(region_y))

    def regions(self, z: np.ndarray) -> np.ndarray:
        if self.geometry == STRIP:
            return strip_regions(z, self.band)
        return classify_many(z, band=self.band)

    def value(self, x: Any, y: Any, region_x: Optional[Any] = None) -> SeriesValue:
        return _evaluate(self, x, y, region_x, 'value')

    def gradient_y(self, x: Any, y: Any, region_x: Optional[Any] = None) -> SeriesValue:
        return _evaluate(self, x, y, region_x, 'grad_y')

    def gradient_x(self, x: Any, y: Any, region_x: Optional[Any] = None) -> SeriesValue:
        return _evaluate(self, x, y, region_x, 'grad_x')


def _source_region(kernel: TransmissionKernel, zy: complex) -> str:
    if kernel.geometry == DISK and abs(zy) <= CUSP_TOL:
        raise DomainError("Source point is within the cusp tolerance of the tangency point")
    tag = str(kernel.regions(np.array([zy]))[0])
    if tag not in (INCLUSION1, INCLUSION2, MATRIX):
        raise DomainError("Source point lies on an interface")
    return tag


def _field_regions(kernel: TransmissionKernel, zx: np.ndarray, region_x: Optional[Any]) -> np.ndarray:
    if kernel.geometry == DISK and np.any(np.abs(zx) <= CUSP_TOL):
        raise DomainError("Field point is within the cusp tolerance of the tangency point")
    if region_x is None:
        tags = kernel.regions(zx)
        if not np.all(np.isin(tags, (INCLUSION1, INCLUSION2, MATRIX))):
            raise DomainError("Field point on an interface needs an explicit region hint")
        return tags
    if isinstance(region_x, str):
        tags = np.full(zx.shape, region_x, dtype=object)
    else:
        tags = np.asarray(region_x, dtype=object)
        if tags.shape != zx.shape:
            raise DomainError("Region hints must match the number of points")
    if not np.all(np.isin(tags, (INCLUSION1, INCLUSION2, MATRIX))):
        raise DomainError("Region hints must be bulk regions")
    return tags


def _tail_function(kernel: TransmissionKernel, zx: np.ndarray, zy: np.ndarray, what: str):
    """Certified bound K -> |sum over image groups > K| for a batch of field and source points."""
    r = abs(kernel.rho)
    if kernel.geometry == STRIP:
        x1max = float(np.max(np.abs(np.real(zx))))
        y1max = float(np.max(np.abs(np.real(zy))))
        spread = float(np.max(np.abs(zx))) + float(np.max(np.abs(zy)))

        def tail(K: int) -> float:
            if r == 0.0 and K >= 1:
                return 0.0
            g = K + 1
            d_lo = 2 * g - 1 - x1max - y1max
            if d_lo < 1.0:
                return float('inf')
            if what == 'value':
                L0 = np.log(2 * g + 1 + spread)
                return 16.0 * r ** K * (L0 / (1.0 - r) + r / (1.0 - r) ** 2)
            return 16.0 * r ** K / (d_lo * (1.0 - r))

        return tail

    w1max = float(np.max(np.abs(np.real(1j / zx))))
    ay = float(np.min(np.abs(zy)))
    log_y = max(abs(np.log(ay)), abs(np.log(float(np.max(np.abs(zy))))))
    xmin = float(np.min(np.abs(zx)))

    def tail(K: int) -> float:
        if r == 0.0 and K >= 1:
            return 0.0
        d = 2 * K + 1 - w1max
        if d <= 0:
            return float('inf')
        rk = 1.0 / d
        if rk > ay / 2.0:
            return float('inf')
        if what == 'value':
            per = log_y + 1.0
        elif what == 'grad_y':
            per = 2.0 / ay
        else:
            per = 2.0 * rk * rk / (xmin * xmin * ay)
        return 16.0 * r ** K * per / (1.0 - r)

    return tail


def _term_arrays(kernel: TransmissionKernel, zx: np.ndarray, zy: np.ndarray, shifts: np.ndarray,
                 refl: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Mapped field points X, derivatives X' (shape (nx, terms)) and image sources Q (shape (ny, terms)).

    Strip images are x + k against y or -conj(y); disk images are X_k(x) against y or conj(y).
    """
    k = shifts[None, :]
    z = zx[:, None]
    mirror = -np.conj(zy) if kernel.geometry == STRIP else np.conj(zy)
    Q = np.where(refl[None, :], mirror[:, None], zy[:, None])
    if kernel.geometry == STRIP:
        X = z + k
        return X, np.ones_like(X), Q
    den = 1.0 - 1j * k * z
    if np.any(np.abs(den) <= POLE_TOL * np.maximum(1.0, np.abs(k * z))):
        raise DomainError("Field point hits the pole of an X_k map")
    return z / den, 1.0 / den ** 2, Q


def _image_sum(kernel: TransmissionKernel, zx: np.ndarray, zy: np.ndarray, rx: str, ry: str, what: str):
    """Sum one image table; exactly one of zx, zy may hold more than one point."""
    tail = _tail_function(kernel, zx, zy, what)
    K = kernel.trunc.choose_terms(tail, k_min=1)
    w, s, refl = image_terms(rx, ry, kernel.params, K)
    X, dX, Q = _term_arrays(kernel, zx, zy, s, refl)
    diff = X - Q
    live = w != 0.0
    if np.any(np.abs(diff[:, live]) <= COINCIDENCE_TOL):
        raise DomainError("Field point coincides with the source or one of its images")
    diff = np.where(live[None, :], diff, 1.0)
    if what == 'value':
        vals = np.log(np.abs(diff)) @ w
    elif what == 'grad_x':
        vals = np.conj(dX / diff) @ w
    else:
        inv = -1.0 / diff
        sign = -1.0 if kernel.geometry == STRIP else 1.0
        vals = np.where(refl[None, :], sign * inv, np.conj(inv)) @ w
    bound = tail(K)
    logger.debug("%s kernel %s<-%s K=%d tail=%.3e", kernel.geometry, rx, ry, K, bound)
    return vals, bound, len(w)


def _evaluate(kernel: TransmissionKernel, x: Any, y: Any, region_x: Optional[Any], what: str) -> SeriesValue:
    zx = as_complex(x)
    zy_arr = as_complex(y)
    if zy_arr.size != 1:
        raise DomainError("Kernel evaluation takes a single source point")
    ry = _source_region(kernel, complex(zy_arr[0]))
    tags = _field_regions(kernel, zx, region_x)

    out = np.zeros(zx.shape, dtype=float if what == 'value' else complex)
    tails = np.zeros(zx.shape)
    terms_used = 0
    for rx in (INCLUSION1, INCLUSION2, MATRIX):
        mask = tags == rx
        if not np.any(mask):
            continue
        vals, bound, n_terms = _image_sum(kernel, zx[mask], zy_arr, rx, ry, what)
        out[mask] = vals
        tails[mask] = bound
        terms_used = max(terms_used, n_terms)

    c = kernel.scale(ry)
    value = c * out
    tail_bound = abs(c) * tails
    if what != 'value':
        value = np.stack([value.real, value.imag], axis=-1)
    if _is_single(x):
        value = value[0]
        tail_bound = float(tail_bound[0])
    return SeriesValue(value=value, tail_bound=tail_bound, terms_used=terms_used)


def source_gradients(kernel: TransmissionKernel, x: Any, ys: Any, region_x: Optional[str] = None) -> SeriesValue:
    """
    y-gradients of the kernel for one field point and many source points.

    Returns:
        SeriesValue whose value is complex d/dy1 + i d/dy2 per source
    """
    zx = as_complex(x)
    if zx.size != 1:
        raise DomainError("source_gradients takes a single field point")
    rx = str(_field_regions(kernel, zx, region_x)[0])
    zy = as_complex(ys)
    if kernel.geometry == DISK and np.any(np.abs(zy) <= CUSP_TOL):
        raise DomainError("Source point is within the cusp tolerance of the tangency point")
    tags = kernel.regions(zy)
    if not np.all(np.isin(tags, (INCLUSION1, INCLUSION2, MATRIX))):
        raise DomainError("Source point lies on an interface")

    out = np.zeros(zy.shape, dtype=complex)
    tails = np.zeros(zy.shape)
    terms_used = 0
    for ry in (INCLUSION1, INCLUSION2, MATRIX):
        mask = tags == ry
        if not np.any(mask):
            continue
        vals, bound, n_terms = _image_sum(kernel, zx, zy[mask], rx, ry, 'grad_y')
        c = kernel.scale(ry)
        out[mask] = c * vals
        tails[mask] = abs(c) * bound
        terms_used = max(terms_used, n_terms)
    return SeriesValue(value=out, tail_bound=tails, terms_used=terms_used)


def _require(kernel: TransmissionKernel, geometry: str):
    if kernel.geometry != geometry:
        raise ConfigError(f"Expected a {geometry} kernel, got {kernel.geometry}")


def eval_gtilde(x: Any, y: Any, kernel: TransmissionKernel, region_x: Optional[Any] = None) -> SeriesValue:
    """
    Strip Green's function G~(x, y).

    Raises:
        DomainError: x equal to y or to an image, source on x1 = +-1/2,
            field point on an interface without a region hint
    """
    _require(kernel, STRIP)
    return kernel.value(x, y, region_x)


def eval_g(x: Any, y: Any, kernel: TransmissionKernel, region_x: Optional[Any] = None) -> SeriesValue:
    """
    Disk Green's function G(x, y).

    Raises:
        DomainError: as eval_gtilde, plus X_k poles and cusp proximity
    """
    _require(kernel, DISK)
    return kernel.value(x, y, region_x)


def eval_g_gradient_y(x: Any, y: Any, kernel: TransmissionKernel,
                      region_x: Optional[Any] = None) -> SeriesValue:
    """Gradient of the kernel in the source variable y, as (d/dy1, d/dy2)."""
    return kernel.gradient_y(x, y, region_x)


def eval_g_gradient_x(x: Any, y: Any, kernel: TransmissionKernel,
                      region_x: Optional[Any] = None) -> SeriesValue:
    """Gradient of the kernel in the field variable x, as (d/dx1, d/dx2)."""
    return kernel.gradient_x(x, y, region_x)


def h_function(x: Any, region_y: str, kernel: TransmissionKernel,
               region_x: Optional[Any] = None) -> SeriesValue:
    """
    Strip image sum with every image source moved to the origin.

    H(x) = sum_t w_t log|x + k_t| with the image table of (region_x, region_y).
    """
    _require(kernel, STRIP)
    zx = as_complex(x)
    tags = _field_regions(kernel, zx, region_x)
    out = np.zeros(zx.shape)
    tails = np.zeros(zx.shape)
    terms_used = 0
    for rx in (INCLUSION1, INCLUSION2, MATRIX):
        mask = tags == rx
        if not np.any(mask):
            continue
        zr = zx[mask]
        tail = _tail_function(kernel, zr, np.zeros(1, dtype=complex), 'value')
        K = kernel.trunc.choose_terms(tail, k_min=1)
        w, s, _ = image_terms(rx, region_y, kernel.params, K)
        d = np.abs(zr[:, None] + s[None, :])
        live = w != 0.0
        if np.any(d[:, live] <= COINCIDENCE_TOL):
            raise DomainError("Field point hits an integer shift of the origin")
        out[mask] = np.log(np.where(live[None, :], d, 1.0)) @ w
        tails[mask] = tail(K)
        terms_used = max(terms_used, len(w))
    return SeriesValue(value=out, tail_bound=tails, terms_used=terms_used)


def correspondence_check(x: Any, y: Any, strip: TransmissionKernel, disk: TransmissionKernel) -> Dict[str, float]:
    """
    Residual of G(Theta(x), y) = G~(x, Theta(y)) - H(x) + c log|y|.

    Args:
        x: Strip point (field)
        y: Disk point (source)
        strip: Strip kernel
        disk: Disk kernel sharing the same parameters

    Returns:
        Dict with residual, tail_bound and the three evaluated pieces
    """
    _require(strip, STRIP)
    _require(disk, DISK)
    if strip.params != disk.params:
        raise ConfigError("Kernels must share medium parameters")
    if strip.normalization != LOGARITHMIC or disk.normalization != LOGARITHMIC:
        raise ConfigError("Correspondence is stated in the logarithmic normalization")
    zx = complex(as_complex(x)[0])
    zy = complex(as_complex(y)[0])
    if abs(zx) <= POLE_TOL or abs(zy) <= POLE_TOL:
        raise DomainError("Correspondence needs points away from the origin")
    region_y = _source_region(disk, zy)
    region_x = str(strip_regions(np.array([zx]), strip.band)[0])

    lhs = disk.value(complex(theta_c(zx)), zy, region_x=region_x)
    gt = strip.value(zx, complex(theta_c(zy)), region_x=region_x)
    h = h_function(zx, region_y, strip, region_x=region_x)
    c = correspondence_constant(region_y, strip.params)
    rhs = float(np.real(gt.value)) - float(h.value[0]) + c * np.log(abs(zy))
    residual = abs(float(np.real(lhs.value)) - rhs)
    tail = float(lhs.tail_bound) + float(gt.tail_bound) + float(h.tail_bound[0])
    return {
        'residual': residual,
        'tail_bound': tail,
        'lhs': float(np.real(lhs.value)),
        'rhs': rhs,
        'region_x': region_x,
        'region_y': region_y,
    }


def kernel_table(kernel: TransmissionKernel, xs: Any, ys: Any) -> pd.DataFrame:
    """
    Tabulate the kernel on all (x, y) pairs.

    Returns:
        DataFrame with columns x1, x2, y1, y2, region_x, region_y, G, tail_bound
    """
    zx = as_complex(xs)
    zy = as_complex(ys)
    rows = []
    tags = _field_regions(kernel, zx, None)
    for y in zy:
        ry = _source_region(kernel, complex(y))
        res = kernel.value(zx, complex(y), region_x=tags)
        for i, x in enumerate(zx):
            rows.append({
                'x1': x.real,
                'x2': x.imag,
                'y1': y.real,
                'y2': y.imag,
                'region_x': tags[i],
                'region_y': ry,
                'G': res.value[i],
                'tail_bound': res.tail_bound[i],
            })
    return pd.DataFrame(rows, columns=['x1', 'x2', 'y1', 'y2', 'region_x', 'region_y', 'G', 'tail_bound'])


def save_kernel_table(df: pd.DataFrame, output_path: str, kernel: TransmissionKernel,
                      header: Optional[Dict[str, Any]] = None):
    """Write a kernel table with its truncation header."""
    lines = {
        'geometry': kernel.geometry,
        'normalization': kernel.normalization,
        'tail_tol': repr(kernel.trunc.tail_tol),
        'achieved_tol': repr(float(df['tail_bound'].max())) if len(df) else '0',
    }
    lines.update(header or {})
    write_csv(df, output_path, lines)
    logger.info("Saved kernel table (%d rows) to %s", len(df), output_path)
