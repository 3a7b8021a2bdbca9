"""
Medium Parameters, Truncation Policy and Error Types

Shared building blocks for every series evaluator:
- MediumParams: inclusion coefficients (a0, b0), contrasts (alpha, beta), outer radius R0
- TruncationPolicy: fixed-K or tail-target truncation of image series
- SeriesValue: a truncated value carrying its certified tail bound
- Error hierarchy mapped to CLI exit codes
"""

import logging
from dataclasses import dataclass
from typing import Any, Callable, Optional

import numpy as np

logger = logging.getLogger(__name__)

INCLUSION1 = 'inclusion1'
INCLUSION2 = 'inclusion2'
MATRIX = 'matrix'
BULK_REGIONS = (INCLUSION1, INCLUSION2, MATRIX)


class CuspError(Exception):
    """Base class for all errors raised by the toolkit."""


class DomainError(CuspError, ValueError):
    """Input lies at a pole, the cusp, a source point or outside a validity range."""


class ConfigError(CuspError, ValueError):
    """Invalid configuration or inconsistent problem setup."""


class ConvergenceError(CuspError):
    """A truncation or solve did not reach the requested tolerance."""

    def __init__(self, message: str, achieved: float = float('nan'), requested: float = float('nan')):
        super().__init__(message)
        self.achieved = achieved
        self.requested = requested


class VerificationError(CuspError):
    """A named verification check failed."""

    def __init__(self, message: str, check: str = ''):
        super().__init__(message)
        self.check = check


def contrast(a: float) -> float:
    """Reflection contrast (a - 1) / (a + 1) of a coefficient a > 0."""
    return (a - 1.0) / (a + 1.0)


@dataclass(frozen=True)
class MediumParams:
    """
    Physical configuration of the two-inclusion medium.

    The contrasts are always derived from the coefficients, so they can never
    disagree with them.
    """

    a0: float = 1.0
    b0: float = 1.0
    R0: float = 3.0

    def __post_init__(self):
        if not (np.isfinite(self.a0) and self.a0 > 0):
            raise ConfigError(f"a0 must be positive, got {self.a0}")
        if not (np.isfinite(self.b0) and self.b0 > 0):
            raise ConfigError(f"b0 must be positive, got {self.b0}")
        if not (np.isfinite(self.R0) and self.R0 > 0):
            raise ConfigError(f"R0 must be positive, got {self.R0}")

    @classmethod
    def from_contrasts(cls, alpha: float, beta: Optional[float] = None, R0: float = 3.0) -> 'MediumParams':
        """Build parameters from contrasts in (-1, 1)."""
        if beta is None:
            beta = alpha
        for name, c in (('alpha', alpha), ('beta', beta)):
            if not -1.0 < c < 1.0:
                raise ConfigError(f"{name} must lie in (-1, 1), got {c}")
        return cls(a0=(1.0 + alpha) / (1.0 - alpha), b0=(1.0 + beta) / (1.0 - beta), R0=R0)

    @property
    def alpha(self) -> float:
        return contrast(self.a0)

    @property
    def beta(self) -> float:
        return contrast(self.b0)

    @property
    def rho(self) -> float:
        return self.alpha * self.beta

    @property
    def symmetric(self) -> bool:
        return self.a0 == self.b0

    def coefficient(self, region: str) -> float:
        """Coefficient a on a bulk region tag."""
        if region == INCLUSION1:
            return self.a0
        if region == INCLUSION2:
            return self.b0
        if region == MATRIX:
            return 1.0
        raise DomainError(f"No coefficient for region {region!r}")

    def with_radius(self, R0: float) -> 'MediumParams':
        return MediumParams(a0=self.a0, b0=self.b0, R0=R0)

    def to_dict(self) -> dict:
        return {
            'a0': self.a0,
            'b0': self.b0,
            'alpha': self.alpha,
            'beta': self.beta,
            'R0': self.R0,
        }


@dataclass(frozen=True)
class TruncationPolicy:
    """
    How an infinite image series is cut.

    Args:
        mode: 'tail-target' picks the smallest K whose a-priori tail bound is at
            most tail_tol; 'fixed-K' always uses k_max
        k_max: Largest series index ever summed
        tail_tol: Requested bound on the discarded tail
    """

    mode: str = 'tail-target'
    k_max: int = 4000
    tail_tol: float = 1e-12

    def __post_init__(self):
        if self.mode not in ('tail-target', 'fixed-K'):
            raise ConfigError(f"Unknown truncation mode: {self.mode}")
        if self.k_max < 1:
            raise ConfigError("k_max must be at least 1")
        if not self.tail_tol > 0:
            raise ConfigError("tail_tol must be positive")

    def refined(self, factor: float = 0.5) -> 'TruncationPolicy':
        return TruncationPolicy(mode=self.mode, k_max=self.k_max, tail_tol=self.tail_tol * factor)

    def choose_terms(self, tail: Callable[[int], float], k_min: int = 0) -> int:
        """
        Pick the truncation index K for a decreasing tail-bound function.

        Args:
            tail: K -> bound on everything beyond index K (may return inf when
                the bound is not yet valid)
            k_min: Smallest admissible K

        Returns:
            Chosen K
        """
        if self.mode == 'fixed-K':
            return max(self.k_max, k_min)
        K = k_min
        while K <= self.k_max:
            if tail(K) <= self.tail_tol:
                logger.debug("truncation K=%d tail=%.3e", K, tail(K))
                return K
            K += 1
        raise ConvergenceError(
            f"Tail bound did not reach {self.tail_tol:.1e} within k_max={self.k_max}",
            achieved=float(tail(self.k_max)),
            requested=self.tail_tol,
        )


@dataclass
class SeriesValue:
    """Truncated series value (scalar or array) with its certified tail bound."""

    value: Any
    tail_bound: Any
    terms_used: int

    def __post_init__(self):
        if np.any(np.asarray(self.tail_bound) < 0):
            raise ValueError("tail_bound must be non-negative")

    def __add__(self, other: 'SeriesValue') -> 'SeriesValue':
        return SeriesValue(
            value=self.value + other.value,
            tail_bound=self.tail_bound + other.tail_bound,
            terms_used=max(self.terms_used, other.terms_used),
        )

    def scaled(self, c: float) -> 'SeriesValue':
        return SeriesValue(value=c * self.value, tail_bound=abs(c) * self.tail_bound, terms_used=self.terms_used)


def geometric_tail(weight: float, ratio: float, first_term: float) -> float:
    """Bound weight * sum_{m>=0} |ratio|^m * first_term for |ratio| < 1."""
    r = abs(ratio)
    if weight == 0.0 or first_term == 0.0:
        return 0.0
    if r >= 1.0:
        return float('inf')
    return weight * first_term / (1.0 - r)


def as_complex(points: Any) -> np.ndarray:
    """
    Normalize point input to a complex array.

    Accepts complex scalars/arrays, (x1, x2) pairs, (n, 2) arrays and objects
    exposing a ``z`` attribute.
    """
    if hasattr(points, 'z'):
        return np.atleast_1d(np.asarray(points.z, dtype=complex))
    arr = np.asarray(points)
    if np.iscomplexobj(arr):
        return np.atleast_1d(arr.astype(complex))
    arr = arr.astype(float)
    if arr.ndim == 1 and arr.shape[0] == 2:
        return np.array([arr[0] + 1j * arr[1]])
    if arr.ndim == 2 and arr.shape[1] == 2:
        return arr[:, 0] + 1j * arr[:, 1]
    if arr.ndim <= 1:
        return np.atleast_1d(arr.astype(complex))
    raise DomainError(f"Cannot interpret points of shape {arr.shape}")


@dataclass
class CoeffVector:
    """
    Finite coefficient sequence in the trigonometric boundary basis.

    Index l refers to cos(l*phi) for parity 'even' and sin(l*phi) for parity
    'odd', with phi = theta - pi/2 on the circle |x| = R0. For odd parity
    entry 0 is a placeholder and always zero.
    """

    entries: np.ndarray
    parity: str = 'even'
    s_weight: float = 0.0

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=float)
        if self.parity not in ('even', 'odd'):
            raise ConfigError(f"Unknown parity: {self.parity}")
        if self.entries.ndim != 1:
            raise ConfigError("CoeffVector entries must be one-dimensional")

    def __len__(self) -> int:
        return len(self.entries)

    def truncated(self, n: int) -> 'CoeffVector':
        out = np.zeros(n)
        m = min(n, len(self.entries))
        out[:m] = self.entries[:m]
        return CoeffVector(out, self.parity, self.s_weight)
