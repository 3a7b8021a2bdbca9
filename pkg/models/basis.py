"""
Explicit Transmission Solutions u_j / v_j

Evaluates the piecewise harmonic families built by the method of images in the
strip coordinate w = i / z:
- Symmetric family (a0 = b0) and general family (a0 != b0)
- Even-in-x1 (u_j = R0^-j Re Psi_j) and odd-in-x1 (v_j = R0^-j Im Psi_j) parity
- Values, gradients and higher derivatives with certified tail bounds
- Closed-form and quadrature traces on |x| = R0
- Derivative-bound audit over j

Every term of a family has the form c * phi_j(sigma * (w - p)) with
phi_j(w) = w^-j, so all families share one evaluator.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import fft
from scipy.special import gammaln

from geometry.maps import DEFAULT_BAND, bulk_region_c, signed_distances
from models.medium import (
    INCLUSION1, INCLUSION2, MATRIX, CoeffVector, ConfigError, DomainError,
    MediumParams, SeriesValue, TruncationPolicy, as_complex,
)

logger = logging.getLogger(__name__)

SYMMETRIC = 'symmetric'
GENERAL = 'general'
EVEN = 'even'
ODD = 'odd'

DEFAULT_TRUNCATION = TruncationPolicy()


@dataclass(frozen=True)
class BasisId:
    """Identifies one member of a solution family."""

    family: str = GENERAL
    parity: str = EVEN
    j: int = 0

    def __post_init__(self):
        if self.family not in (SYMMETRIC, GENERAL):
            raise ConfigError(f"Unknown family: {self.family}")
        if self.parity not in (EVEN, ODD):
            raise ConfigError(f"Unknown parity: {self.parity}")
        if int(self.j) != self.j or self.j < 0:
            raise DomainError(f"Basis index must be a non-negative integer, got {self.j}")

    def with_j(self, j: int) -> 'BasisId':
        return BasisId(self.family, self.parity, j)


def reflection_coefficients(params: MediumParams, parity: str) -> Tuple[float, float, float, float]:
    """
    Interface reflection and transmission weights (ra, rb, ta, tb).

    ra, rb reflect off the 1- and 2-interfaces back into the matrix; ta, tb
    transmit from the matrix into the inclusions. The odd parity flips the
    reflection sign because Im rather than Re carries the solution.
    """
    alpha, beta = params.alpha, params.beta
    if parity == EVEN:
        ra, rb = -alpha, -beta
    else:
        ra, rb = alpha, beta
    return ra, rb, 1.0 - alpha, 1.0 - beta


def _check_family(bid: BasisId, params: MediumParams):
    if bid.family == SYMMETRIC and not params.symmetric:
        raise ConfigError("The symmetric family requires a0 == b0")


def image_terms(bid: BasisId, params: MediumParams, region: str, K: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Image term table (coef, sigma, pole) for series indices 0..K.

    Args:
        bid: Family and parity (j is not used)
        params: Medium parameters
        region: Bulk region whose branch formula is requested
        K: Last series index kept

    Returns:
        Arrays of coefficients, orientation signs and real pole positions
    """
    _check_family(bid, params)
    ra, rb, ta, tb = reflection_coefficients(params, bid.parity)
    coef: List[float] = []
    sigma: List[float] = []
    pole: List[float] = []

    def add(c, s, p):
        coef.append(c)
        sigma.append(s)
        pole.append(p)

    if bid.family == SYMMETRIC:
        for m in range(K + 1):
            s = 1.0 if m % 2 == 0 else -1.0
            w = ra ** m
            if region == MATRIX:
                if m == 0:
                    add(1.0, 1.0, 0.0)
                else:
                    add(w, s, float(m))
                    add(w, s, float(-m))
            elif region == INCLUSION1:
                add(ta * w, s, float(-m))
            elif region == INCLUSION2:
                add(ta * w, s, float(m))
            else:
                raise DomainError(f"Unknown region {region!r}")
    else:
        rho = ra * rb
        for k in range(K + 1):
            if region == MATRIX:
                if k == 0:
                    add(1.0, 1.0, 0.0)
                else:
                    add(rho ** k, 1.0, -2.0 * k)
                    add(rho ** k, 1.0, 2.0 * k)
                    add(rho ** (k - 1) * ra, -1.0, 2.0 * k - 1)
                    add(rho ** (k - 1) * rb, -1.0, -(2.0 * k - 1))
            elif region == INCLUSION1:
                add(ta * rho ** k, 1.0, -2.0 * k)
                add(ta * rho ** k * rb, -1.0, -(2.0 * k + 1))
            elif region == INCLUSION2:
                add(tb * rho ** k, 1.0, 2.0 * k)
                add(tb * rho ** k * ra, -1.0, 2.0 * k + 1)
            else:
                raise DomainError(f"Unknown region {region!r}")
    return np.array(coef), np.array(sigma), np.array(pole)


def _tail_function(bid: BasisId, params: MediumParams, region: str, re_w: np.ndarray, extra: float = 1.0,
                   extra_power: int = 0):
    """
    Certified tail bound K -> sum of |scaled term| over series indices > K.

    Scaled terms are c * sigma^j * (R0 (w - p))^-j; extra and extra_power
    inflate each discarded term by extra * (j or 1) / d^extra_power for
    derivative tails.
    """
    j = bid.j
    R0 = params.R0
    ra, rb, ta, tb = reflection_coefficients(params, bid.parity)
    if bid.family == SYMMETRIC:
        ratio = abs(ra)
        if region == MATRIX:
            count, weight = 2.0, 1.0
            dist = lambda n: n - np.max(np.abs(re_w))
        elif region == INCLUSION1:
            count, weight = 1.0, abs(ta)
            dist = lambda n: np.min(re_w) + n
        else:
            count, weight = 1.0, abs(ta)
            dist = lambda n: n - np.max(re_w)
        # index n term carries |ra|^n
        lead = lambda K: weight * ratio ** (K + 1)
    else:
        ratio = abs(ra * rb)
        if region == MATRIX:
            count, weight = 4.0, max(ratio, abs(ra), abs(rb))
            dist = lambda n: 2.0 * n - 1.0 - np.max(np.abs(re_w))
            lead = lambda K: weight * ratio ** K
        elif region == INCLUSION1:
            count, weight = 2.0, abs(ta) * max(1.0, abs(rb))
            dist = lambda n: np.min(re_w) + 2.0 * n
            lead = lambda K: weight * ratio ** (K + 1)
        else:
            count, weight = 2.0, abs(tb) * max(1.0, abs(ra))
            dist = lambda n: 2.0 * n - np.max(re_w)
            lead = lambda K: weight * ratio ** (K + 1)

    def tail(K: int) -> float:
        if ratio >= 1.0:
            return float('inf')
        w = lead(K)
        if w == 0.0:
            return 0.0
        d = float(dist(K + 1))
        if d <= 0 or R0 * d < 1.0:
            return float('inf')
        mag = (R0 * d) ** (-j) if j > 0 else 1.0
        if extra_power:
            mag *= extra * max(j, 1) / d ** extra_power
        return count * w * mag / (1.0 - ratio)

    return tail


def _resolve_regions(z: np.ndarray, region: Optional[Any]) -> np.ndarray:
    if region is None:
        return bulk_region_c(z)
    if isinstance(region, str):
        if region not in (INCLUSION1, INCLUSION2, MATRIX):
            raise DomainError(f"Region hint must be a bulk region, got {region!r}")
        return np.full(z.shape, region, dtype=object)
    tags = np.asarray(region, dtype=object)
    if tags.shape != z.shape:
        raise DomainError("Region hints must match the number of points")
    return tags


def _is_single(points: Any) -> bool:
    if hasattr(points, 'z'):
        return True
    if isinstance(points, (complex, float, int)):
        return True
    if isinstance(points, tuple) and len(points) == 2 and np.ndim(points[0]) == 0:
        return True
    return False


def _derivative_stack(bid: BasisId, params: MediumParams, z: np.ndarray, region: str, K: int,
                      order: int, scaled: bool = True) -> List[np.ndarray]:
    """
    Holomorphic derivatives F, F', ..., F^(order) in z of the (scaled) family.

    F = R0^-j Psi_j when scaled, else Psi_j.
    """
    j = bid.j
    coef, sigma, pole = image_terms(bid, params, region, K)
    w = 1j / z
    diff = w[:, None] - pole[None, :]
    if np.any(np.abs(diff) < 1e-14):
        raise DomainError("Evaluation point hits an image pole")
    scale = params.R0 if scaled else 1.0
    base = (coef * sigma ** j)[None, :] * (scale * diff) ** (-j)
    phis = []
    rising = 1.0
    for n in range(order + 1):
        if n > 0:
            rising *= (j + n - 1)
        if n > 0 and j == 0:
            phis.append(np.zeros(z.shape, dtype=complex))
            continue
        phis.append(np.sum(base * ((-1.0) ** n) * rising * diff ** (-n), axis=1))
    if order == 0:
        return [phis[0]]
    w1 = -1j / z ** 2
    out = [phis[0], phis[1] * w1]
    if order >= 2:
        w2 = 2j / z ** 3
        out.append(phis[2] * w1 ** 2 + phis[1] * w2)
    if order >= 3:
        w3 = -6j / z ** 4
        out.append(phis[3] * w1 ** 3 + 3.0 * phis[2] * w1 * w2 + phis[1] * w3)
    return out


def _prepare(bid: BasisId, points: Any, params: MediumParams, region: Optional[Any]):
    _check_family(bid, params)
    z = as_complex(points)
    if np.any(z == 0):
        raise DomainError("Basis functions are evaluated away from the tangency point")
    tags = _resolve_regions(z, region)
    return z, tags


def _evaluate(bid: BasisId, points: Any, params: MediumParams, trunc: TruncationPolicy,
              region: Optional[Any], order: int, scaled: bool, grad_tail: bool):
    z, tags = _prepare(bid, points, params, region)
    derivs = [np.zeros(z.shape, dtype=complex) for _ in range(order + 1)]
    tails = np.zeros(z.shape)
    terms_used = 0
    for reg in (INCLUSION1, INCLUSION2, MATRIX):
        mask = tags == reg
        if not np.any(mask):
            continue
        zr = z[mask]
        re_w = np.real(1j / zr)
        value_tail = _tail_function(bid, params, reg, re_w)
        K = trunc.choose_terms(value_tail)
        stack = _derivative_stack(bid, params, zr, reg, K, order, scaled)
        for n in range(order + 1):
            derivs[n][mask] = stack[n]
        if grad_tail:
            w2max = float(np.max(np.abs(1j / zr)) ** 2)
            gt = _tail_function(bid, params, reg, re_w, extra=w2max, extra_power=1)(K)
            tails[mask] = gt
        else:
            tails[mask] = value_tail(K)
        terms_used = max(terms_used, K + 1)
    if not scaled:
        tails = tails * params.R0 ** bid.j
    return z, derivs, tails, terms_used


def eval_psi(bid: BasisId, points: Any, params: MediumParams,
             trunc: TruncationPolicy = DEFAULT_TRUNCATION, region: Optional[Any] = None) -> SeriesValue:
    """
    Complex solution Psi_j(z) = Phi_j(i / z), unscaled.

    Args:
        bid: Family, parity and index
        points: Evaluation point(s)
        params: Medium parameters
        trunc: Truncation policy
        region: Optional bulk-region hint (string or per-point array)

    Returns:
        SeriesValue with complex value(s)
    """
    _, derivs, tails, used = _evaluate(bid, points, params, trunc, region, 0, False, False)
    value = derivs[0]
    if _is_single(points):
        return SeriesValue(complex(value[0]), float(tails[0]), used)
    return SeriesValue(value, tails, used)


def _real_part(bid: BasisId, f: np.ndarray) -> np.ndarray:
    return np.real(f) if bid.parity == EVEN else np.imag(f)


def eval_u(bid: BasisId, points: Any, params: MediumParams,
           trunc: TruncationPolicy = DEFAULT_TRUNCATION, region: Optional[Any] = None) -> SeriesValue:
    """Real solution u_j = R0^-j Re Psi_j (even) or v_j = R0^-j Im Psi_j (odd)."""
    _, derivs, tails, used = _evaluate(bid, points, params, trunc, region, 0, True, False)
    value = _real_part(bid, derivs[0])
    if _is_single(points):
        return SeriesValue(float(value[0]), float(tails[0]), used)
    return SeriesValue(value, tails, used)


def eval_u_gradient(bid: BasisId, points: Any, params: MediumParams,
                    trunc: TruncationPolicy = DEFAULT_TRUNCATION, region: Optional[Any] = None,
                    band: float = DEFAULT_BAND) -> SeriesValue:
    """
    Gradient of u_j / v_j by termwise complex differentiation.

    Points within band of an interface need an explicit region hint.

    Returns:
        SeriesValue whose value has shape (n, 2) (or (2,) for one point)
    """
    z = as_complex(points)
    if region is None:
        d1, d2 = signed_distances(z)
        if np.any(np.abs(d1) <= band) or np.any(np.abs(d2) <= band):
            raise DomainError("Gradient requested on an interface without a region hint")
    _, derivs, tails, used = _evaluate(bid, points, params, trunc, region, 1, True, True)
    fp = derivs[1]
    if bid.parity == EVEN:
        grad = np.stack([np.real(fp), -np.imag(fp)], axis=-1)
    else:
        grad = np.stack([np.imag(fp), np.real(fp)], axis=-1)
    if _is_single(points):
        return SeriesValue(grad[0], float(tails[0]), used)
    return SeriesValue(grad, tails, used)


def eval_u_derivative(bid: BasisId, points: Any, params: MediumParams, m: Tuple[int, int],
                      trunc: TruncationPolicy = DEFAULT_TRUNCATION, region: Optional[Any] = None) -> np.ndarray:
    """Mixed partial D^m u_j for |m| <= 3, using d^a_x d^b_y F = i^b F^(a+b)."""
    a, b = m
    n = a + b
    if a < 0 or b < 0 or n > 3:
        raise DomainError("Derivative order must satisfy |m| <= 3")
    _, derivs, _, _ = _evaluate(bid, points, params, trunc, region, n, True, False)
    return _real_part(bid, (1j ** b) * derivs[n])


def _log_binom(n: np.ndarray, k: np.ndarray) -> np.ndarray:
    return gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)


def trace_fourier(bid: BasisId, params: MediumParams, n_coeffs: int = 64,
                  trunc: TruncationPolicy = DEFAULT_TRUNCATION, n_quad: int = 4096) -> CoeffVector:
    """
    Closed-form trace of u_j (or v_j) on |x| = R0 in the trigonometric basis.

    Each matrix-region image term c * sigma^j * (R0 (w - p))^-j expands in
    powers of e^{-i phi} / (R0 p) by the negative binomial series. The
    general family is routed to numerical_trace_fourier.

    Args:
        bid: Basis member
        params: Medium parameters (R0 > 2)
        n_coeffs: Number of coefficients returned
        trunc: Truncation policy for the image sums
        n_quad: Quadrature size used by the general-family fallback

    Returns:
        CoeffVector in the cos(l phi) / sin(l phi) convention
    """
    if bid.family == GENERAL:
        logger.info("no closed-form trace for the general family; using quadrature")
        return numerical_trace_fourier(bid, params, n_quad, trunc, n_coeffs=n_coeffs)
    _check_family(bid, params)
    if params.R0 <= 2.0:
        raise DomainError("Closed-form traces require R0 > 2")
    j, R0 = bid.j, params.R0
    ra, _, _, _ = reflection_coefficients(params, bid.parity)
    out = np.zeros(n_coeffs)
    if bid.parity == ODD and j == 0:
        return CoeffVector(out, ODD)
    if j < n_coeffs:
        out[j] = 1.0
    if ra == 0.0:
        return CoeffVector(out, bid.parity)
    if j == 0:
        out[0] = (1.0 + ra) / (1.0 - ra)
        return CoeffVector(out, bid.parity)

    ls = np.arange(n_coeffs)
    powers = ls + j
    log_c = _log_binom(ls + j - 1.0, ls.astype(float))
    r = abs(ra)
    # choose M so the discarded m-tail of the slowest (smallest power) entry is below tol
    p_min = int(powers.min())
    c_max = float(np.exp(np.max(log_c - (powers - p_min) * np.log(R0))))
    M = trunc.choose_terms(
        lambda M: 2.0 * c_max * r ** (M + 1) * ((M + 1) * R0) ** (-p_min) / (1.0 - r),
        k_min=1,
    )
    ms = np.arange(1, M + 1, dtype=float)
    sigma_j = np.where((ms.astype(int) * j) % 2 == 0, 1.0, -1.0)
    weights = (ra ** ms) * sigma_j
    logs = log_c[:, None] - powers[:, None] * np.log(ms[None, :] * R0)
    sums = np.sum(weights[None, :] * np.exp(logs), axis=1)
    parity_mask = (powers % 2 == 0).astype(float)
    contrib = 2.0 * parity_mask * ((-1.0) ** j) * sums
    if bid.parity == EVEN:
        out = out + contrib
    else:
        contrib[0] = 0.0
        out = out - contrib
    return CoeffVector(out, bid.parity)


def circle_points(R0: float, n: int) -> np.ndarray:
    """Points i R0 e^{i phi_m} on |x| = R0 at phi_m = 2 pi m / n (theta = phi + pi/2)."""
    phi = 2.0 * np.pi * np.arange(n) / n
    return 1j * R0 * np.exp(1j * phi)


def fourier_split(samples_phi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Cosine and sine coefficients of samples on a uniform phi-grid."""
    n = len(samples_phi)
    F = fft.rfft(samples_phi)
    cos_c = 2.0 * np.real(F) / n
    sin_c = -2.0 * np.imag(F) / n
    cos_c[0] = np.real(F[0]) / n
    sin_c[0] = 0.0
    return cos_c[: n // 2], sin_c[: n // 2]


def numerical_trace_fourier(bid: BasisId, params: MediumParams, n_quad: int = 4096,
                            trunc: TruncationPolicy = DEFAULT_TRUNCATION,
                            n_coeffs: Optional[int] = None) -> CoeffVector:
    """
    Trapezoidal Fourier analysis of u_j / v_j on |x| = R0.

    Args:
        bid: Basis member
        params: Medium parameters
        n_quad: Power of two >= 256
        trunc: Truncation policy
        n_coeffs: Number of coefficients kept (default n_quad / 2)

    Returns:
        CoeffVector of the member's own parity
    """
    if n_quad < 256 or n_quad & (n_quad - 1):
        raise ConfigError("n_quad must be a power of two >= 256")
    pts = circle_points(params.R0, n_quad)
    vals = eval_u(bid, pts, params, trunc).value
    cos_c, sin_c = fourier_split(np.asarray(vals, dtype=float))
    coeffs = cos_c if bid.parity == EVEN else sin_c
    if n_coeffs is not None:
        coeffs = coeffs[:n_coeffs]
    return CoeffVector(coeffs, bid.parity)


def general_trace_list(params: MediumParams, n_max: int = 10, n_quad: int = 1024,
                       trunc: TruncationPolicy = DEFAULT_TRUNCATION) -> pd.DataFrame:
    """
    Leading-order trace table of the general family.

    Reports the diagonal coefficient and the off-diagonal mass of each u_j,
    the measurable face of u_j = e_j + O(R0^-j).
    """
    rows = []
    for parity in (EVEN, ODD):
        for j in range(n_max + 1):
            if parity == ODD and j == 0:
                continue
            c = numerical_trace_fourier(BasisId(GENERAL, parity, j), params, n_quad, trunc).entries
            off = np.delete(c, j)
            rows.append({
                'parity': parity,
                'j': j,
                'diagonal': float(c[j]),
                'off_diagonal_mass': float(np.sum(np.abs(off))),
                'r0_power': float(params.R0 ** (-j)),
            })
    return pd.DataFrame(rows)


def _default_audit_samples(band: float) -> Dict[str, np.ndarray]:
    r = np.linspace(0.02, 1.0, 15)
    t = 2.0 * np.pi * (np.arange(64) + 0.5) / 64
    z = (r[:, None] * np.exp(1j * t[None, :])).ravel()
    d1, d2 = signed_distances(z)
    keep = (np.abs(d1) > band) & (np.abs(d2) > band)
    z = z[keep]
    tags = bulk_region_c(z)
    return {reg: z[tags == reg] for reg in (INCLUSION1, INCLUSION2, MATRIX)}


def derivative_bound_audit(j_values: Iterable[int], m: Tuple[int, int], params: MediumParams,
                           family: str = GENERAL, parity: str = EVEN,
                           samples: Optional[Dict[str, np.ndarray]] = None,
                           trunc: TruncationPolicy = DEFAULT_TRUNCATION,
                           band: float = 1e-3) -> Dict[str, Any]:
    """
    Trend check of max |D^m u_j| * R0^j / (j + |m|)^|m| over j, per region.

    Returns:
        Report with per-region ratio lists, medians and pass flags
    """
    if samples is None:
        samples = _default_audit_samples(band)
    order = m[0] + m[1]
    js = list(j_values)
    report: Dict[str, Any] = {'m': list(m), 'j': js, 'regions': {}, 'passed': True}
    for reg, pts in samples.items():
        if len(pts) == 0:
            continue
        ratios = []
        for j in js:
            bid = BasisId(family, parity, j)
            d = eval_u_derivative(bid, pts, params, m, trunc, region=reg)
            norm = float(j + order) ** order if (j + order) > 0 else 1.0
            ratios.append(float(np.max(np.abs(d))) * params.R0 ** j / norm)
        med = float(np.median(ratios))
        passed = bool(max(ratios) <= 10.0 * med) if med > 0 else bool(max(ratios) == 0.0)
        report['regions'][reg] = {'ratios': ratios, 'median': med, 'passed': passed}
        report['passed'] = report['passed'] and passed
    return report
