"""
Change-of-Basis Matrix M = I + B

The column j of M holds the trigonometric coefficients of the trace of u_j on
|x| = R0. This module provides:
- Entry evaluation b_entry with certified geometric tails
- Closed-form column sums and the column diagonal-dominance audit
- A certified block-tail bound used to pick truncation sizes
- Truncated assembly (closed form or quadrature columns) and the expansion
  solve of boundary data in the {u_j} basis
- Weighted l^s norms
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import linalg
from scipy.special import gammaln

from models.basis import EVEN, GENERAL, ODD, SYMMETRIC, BasisId, numerical_trace_fourier
from models.medium import (
    CoeffVector, ConfigError, ConvergenceError, DomainError, MediumParams,
    SeriesValue, TruncationPolicy,
)

logger = logging.getLogger(__name__)

DEFAULT_TRUNCATION = TruncationPolicy()


def _check_matrix_args(alpha: float, R0: float):
    if R0 <= 2.0:
        raise DomainError(f"Matrix operations require R0 > 2, got {R0}")
    if not -1.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (-1, 1), got {alpha}")


def _log_binom(n, k):
    n = np.asarray(n, dtype=float)
    k = np.asarray(k, dtype=float)
    return gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)


def _entry_sums(ls: np.ndarray, js: np.ndarray, alpha: float, R0: float, trunc: TruncationPolicy):
    """
    Vectorized B_{l,j} = 2 (-1)^j C(l+j-1, l) sum_k alpha^k (-1)^{k(j+1)} / (k R0)^{l+j}.

    Returns entry values, per-entry tail bounds and the number of k terms.
    """
    ls = np.asarray(ls, dtype=float)
    js = np.asarray(js, dtype=float)
    powers = ls + js
    active = (js > 0) & (np.mod(powers, 2) == 0)
    values = np.zeros(np.broadcast(ls, js).shape)
    tails = np.zeros_like(values)
    a = abs(alpha)
    if a == 0.0 or not np.any(active):
        return values, tails, 0
    log_c = np.where(active, _log_binom(ls + js - 1.0, ls), 0.0)
    p = np.where(active, powers, 2.0)

    def tail_at(K: int) -> float:
        return 2.0 * a ** (K + 1) * float(np.max(np.exp(log_c - p * np.log((K + 1) * R0))[active])) / (1.0 - a)

    K = trunc.choose_terms(tail_at, k_min=1)
    ks = np.arange(1, K + 1, dtype=float)
    acc = np.zeros_like(values)
    for k in ks:
        sign_k = np.where(np.mod(k * (js + 1.0), 2) == 0, 1.0, -1.0)
        acc += (alpha ** k) * sign_k * np.exp(log_c - p * np.log(k * R0))
    sign_j = np.where(np.mod(js, 2) == 0, 1.0, -1.0)
    values = np.where(active, 2.0 * sign_j * acc, 0.0)
    tails = np.where(active, 2.0 * a ** (K + 1) * np.exp(log_c - p * np.log((K + 1) * R0)) / (1.0 - a), 0.0)
    return values, tails, K


def b_entry(l: int, j: int, alpha: float, R0: float,
            trunc: TruncationPolicy = DEFAULT_TRUNCATION) -> SeriesValue:
    """
    Entry B_{l,j} of the even-parity symmetric-family matrix.

    Mixed-parity entries and column 0 are exact zeros.

    Raises:
        DomainError: for R0 <= 2 or negative indices
    """
    _check_matrix_args(alpha, R0)
    if l < 0 or j < 0:
        raise DomainError("Matrix indices must be non-negative")
    v, t, K = _entry_sums(np.array([l]), np.array([j]), alpha, R0, trunc)
    return SeriesValue(float(v[0]), float(t[0]), int(K))


def _k_series(term, trunc: TruncationPolicy, bound_at):
    K = trunc.choose_terms(bound_at, k_min=1)
    total = sum(term(k) for k in range(1, K + 1))
    return total, bound_at(K), K


def column_abs_sum(j: int, alpha: float, R0: float,
                   trunc: TruncationPolicy = DEFAULT_TRUNCATION) -> Dict[str, Any]:
    """
    Sum over rows l >= 1 of |B_{l,j}| for column j >= 1, from single-k-sum closed forms.

    Odd columns: |sum_k alpha^k [(kR0-1)^-j - (kR0+1)^-j]|, which is exact.
    Even columns: sum_k |alpha|^k [(kR0-1)^-j + (kR0+1)^-j - 2 (kR0)^-j] as an
    upper bound, plus the signed sum |sum_k (-alpha)^k [...]| for diagnostics.

    Returns:
        Dict with 'value' (the production figure), 'tail_bound', 'signed',
        'bound', 'terms_used'
    """
    _check_matrix_args(alpha, R0)
    if j < 1:
        raise DomainError("column_abs_sum needs j >= 1")
    a = abs(alpha)
    if a == 0.0:
        return {'value': 0.0, 'tail_bound': 0.0, 'signed': 0.0, 'bound': 0.0, 'terms_used': 0}

    if j % 2 == 1:
        def inner(k):
            return (k * R0 - 1.0) ** (-j) - (k * R0 + 1.0) ** (-j)
        signed_weight = lambda k: alpha ** k
    else:
        def inner(k):
            return (k * R0 - 1.0) ** (-j) + (k * R0 + 1.0) ** (-j) - 2.0 * (k * R0) ** (-j)
        signed_weight = lambda k: (-alpha) ** k

    bound_at = lambda K: a ** (K + 1) * inner(K + 1) / (1.0 - a)
    signed, tail, K = _k_series(lambda k: signed_weight(k) * inner(k), trunc, bound_at)
    abs_total = sum(a ** k * inner(k) for k in range(1, K + 1))
    signed = abs(signed)
    value = signed if j % 2 == 1 else abs_total + tail
    return {
        'value': float(value),
        'tail_bound': float(tail),
        'signed': float(signed),
        'bound': float(abs_total + tail),
        'terms_used': int(K),
    }


def signed_even_column_sum(j: int, alpha: float, R0: float,
                           trunc: TruncationPolicy = DEFAULT_TRUNCATION) -> float:
    """Signed diagnostic sum for an even column."""
    if j % 2:
        raise DomainError("signed_even_column_sum needs an even column")
    return column_abs_sum(j, alpha, R0, trunc)['signed']


def binomial_identity_residual(j: int, k: int, R0: float, L: int = 400) -> float:
    """
    |partial sum - closed form| for sum_{l odd} 2 C(l+j-1, l) x^l = (1-x)^-j - (1+x)^-j.

    Here x = 1 / (k R0) and j is an odd column index.
    """
    x = 1.0 / (k * R0)
    ls = np.arange(1, 2 * L, 2, dtype=float)
    partial = float(np.sum(2.0 * np.exp(_log_binom(ls + j - 1.0, ls) + ls * np.log(x))))
    closed = (1.0 - x) ** (-j) - (1.0 + x) ** (-j)
    return abs(partial - closed)


def block_tail_bound(N: int, alpha: float, R0: float,
                     trunc: TruncationPolicy = DEFAULT_TRUNCATION) -> float:
    """
    Certified bound on sum_{l >= N} sum_j |B_{l,j}|.

    Summing the binomial series over j first gives, per image index k, the
    row tail 2 (kR0 - 1)^-N / (kR0 - 2); the bound is the |alpha|^k-weighted
    k-sum of these plus its own geometric tail.
    """
    _check_matrix_args(alpha, R0)
    a = abs(alpha)
    if a == 0.0:
        return 0.0
    term = lambda k: 2.0 * a ** k * (k * R0 - 1.0) ** (-N) / (k * R0 - 2.0)
    bound_at = lambda K: term(K + 1) / (1.0 - a)
    total, tail, _ = _k_series(term, trunc, bound_at)
    return float(total + tail)


def select_truncation(alpha: float, R0: float, tol: float, n_min: int = 1, n_max: int = 400) -> int:
    """Smallest N >= n_min with block_tail_bound(N) <= tol."""
    for N in range(max(1, n_min), n_max + 1):
        if block_tail_bound(N, alpha, R0) <= tol:
            return N
    raise ConvergenceError(
        f"block tail did not reach {tol:.1e} by N={n_max}",
        achieved=block_tail_bound(n_max, alpha, R0), requested=tol,
    )


@dataclass
class TruncatedMatrix:
    """Dense (N+1) x (N+1) truncation of M with its dominance report."""

    N: int
    entries: np.ndarray
    alpha: float
    R0: float
    parity: str = EVEN
    source: str = 'closed-form'
    gaps: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def min_gap(self) -> float:
        return float(np.min(self.gaps)) if len(self.gaps) else float('nan')

    def save_results(self, output_path: str, header: Optional[Dict[str, Any]] = None) -> pd.DataFrame:
        """
        Save the matrix as (row, col, value) CSV with a commented header.

        Args:
            output_path: Output file path
            header: Extra header fields (config hash, tolerances)

        Returns:
            DataFrame written
        """
        rows, cols = np.indices(self.entries.shape)
        df = pd.DataFrame({
            'row': rows.ravel(),
            'col': cols.ravel(),
            'value': self.entries.ravel(),
        })
        lines = {'N': self.N, 'alpha': repr(self.alpha), 'R0': repr(self.R0), 'parity': self.parity}
        lines.update(header or {})
        write_csv(df, output_path, lines)
        return df


def write_csv(df: pd.DataFrame, output_path: str, header: Dict[str, Any]):
    """CSV with '#'-prefixed header lines and 17-significant-digit floats."""
    path = Path(output_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as f:
        for key, val in header.items():
            f.write(f"# {key}={val}\n")
        df.to_csv(f, index=False, float_format='%.17g')


def dominance_gaps(entries: np.ndarray) -> np.ndarray:
    """|Q_jj| - sum_{l != j} |Q_lj| for the block of rows/columns >= 1."""
    Q = entries[1:, 1:]
    if Q.size == 0:
        return np.zeros(0)
    absQ = np.abs(Q)
    diag = np.diag(absQ)
    return diag - (absQ.sum(axis=0) - diag)


def build_truncated(N: int, alpha: float, R0: float,
                    trunc: TruncationPolicy = DEFAULT_TRUNCATION) -> TruncatedMatrix:
    """
    Closed-form (N+1) x (N+1) truncation of the even symmetric-family matrix.

    Entry (0, 0) is 1/a0 because e_0 is the constant function 1.

    Raises:
        ConvergenceError: if a column of the Q block is not dominant
    """
    _check_matrix_args(alpha, R0)
    if N < 1:
        raise ConfigError("N must be at least 1")
    ls, js = np.indices((N + 1, N + 1))
    values, _, _ = _entry_sums(ls, js, alpha, R0, trunc)
    M = np.eye(N + 1) + values
    M[0, 0] = (1.0 - alpha) / (1.0 + alpha)
    gaps = dominance_gaps(M)
    if np.any(gaps <= 0):
        raise ConvergenceError(
            f"column dominance violated (min gap {gaps.min():.3e}) at R0={R0}, alpha={alpha}",
            achieved=float(gaps.min()), requested=0.0,
        )
    logger.debug("built %dx%d matrix, min gap %.3e", N + 1, N + 1, gaps.min())
    return TruncatedMatrix(N=N, entries=M, alpha=alpha, R0=R0, parity=EVEN, gaps=gaps)


def quadrature_matrix(N: int, params: MediumParams, parity: str, family: str = GENERAL,
                      n_quad: int = 1024, trunc: TruncationPolicy = DEFAULT_TRUNCATION) -> TruncatedMatrix:
    """
    Truncated matrix assembled column by column from quadrature traces.

    Used for the odd parity and the general family; dominance is measured
    and logged, not required. For odd parity entry (0, 0) is set to 1 so the
    placeholder index decouples.
    """
    M = np.zeros((N + 1, N + 1))
    for j in range(N + 1):
        if parity == ODD and j == 0:
            continue
        col = numerical_trace_fourier(BasisId(family, parity, j), params, n_quad, trunc, n_coeffs=N + 1)
        M[:, j] = col.entries
    if parity == ODD:
        M[0, :] = 0.0
        M[:, 0] = 0.0
        M[0, 0] = 1.0
    gaps = dominance_gaps(M)
    if len(gaps) and np.any(gaps <= 0):
        logger.warning("quadrature matrix not column dominant (min gap %.3e)", gaps.min())
    return TruncatedMatrix(N=N, entries=M, alpha=params.alpha, R0=params.R0, parity=parity,
                           source='quadrature', gaps=gaps)


def expansion_matrix(N: int, params: MediumParams, parity: str,
                     trunc: TruncationPolicy = DEFAULT_TRUNCATION, n_quad: int = 1024) -> TruncatedMatrix:
    """Closed form for even symmetric data, quadrature columns otherwise."""
    if parity == EVEN and params.symmetric:
        return build_truncated(N, params.alpha, params.R0, trunc)
    family = SYMMETRIC if params.symmetric else GENERAL
    return quadrature_matrix(N, params, parity, family, n_quad, trunc)


def lp_s_norm(v: Any, s: Optional[float] = None) -> float:
    """(sum_j a_j^2 (1 + j)^(2s))^(1/2); s defaults to the vector's own weight."""
    if isinstance(v, CoeffVector):
        entries = v.entries
        if s is None:
            s = v.s_weight
    else:
        entries = np.asarray(v, dtype=float)
    if s is None:
        s = 0.0
    j = np.arange(len(entries), dtype=float)
    return float(np.sqrt(np.sum(entries ** 2 * (1.0 + j) ** (2.0 * s))))


def expand_boundary(g: CoeffVector, N: Optional[int], params: MediumParams, tol: float = 1e-12,
                    trunc: TruncationPolicy = DEFAULT_TRUNCATION, n_quad: int = 1024,
                    matrix: Optional[TruncatedMatrix] = None) -> Tuple[CoeffVector, Dict[str, Any]]:
    """
    Coefficients a with sum_j a_j u_j matching boundary data g.

    Args:
        g: Single-parity boundary coefficients
        N: Truncation size (None picks it from block_tail_bound and g's tail)
        params: Medium parameters
        tol: Target tolerance for the automatic N choice
        trunc: Truncation policy for matrix entries
        n_quad: Quadrature size for non-closed-form matrices
        matrix: Optional prebuilt matrix (reused across calls)

    Returns:
        (coefficients, residual report)

    Raises:
        ConvergenceError: ill-conditioned truncation or residual above 1e-12 ||g||
    """
    if N is None:
        N = choose_expansion_size(g, params, tol)
    if matrix is None or matrix.N != N or matrix.parity != g.parity:
        matrix = expansion_matrix(N, params, g.parity, trunc, n_quad)
    gN = g.truncated(N + 1).entries
    if g.parity == ODD:
        gN[0] = 0.0
    cond = float(np.linalg.cond(matrix.entries))
    if not np.isfinite(cond) or cond > 1e12:
        raise ConvergenceError(f"ill-conditioned truncation (cond={cond:.2e})", achieved=cond, requested=1e12)
    a = linalg.solve(matrix.entries, gN)
    residual = float(np.linalg.norm(matrix.entries @ a - gN))
    gnorm = float(np.linalg.norm(gN))
    if residual > 1e-12 * max(gnorm, 1e-300) and gnorm > 0:
        raise ConvergenceError(f"expansion residual {residual:.2e} too large", achieved=residual,
                               requested=1e-12 * gnorm)
    s = g.s_weight
    a_vec = CoeffVector(a, g.parity, s)
    g_norm_s = lp_s_norm(gN, s)
    report = {
        'N': N,
        'residual': residual,
        'condition_number': cond,
        'stability_ratio': lp_s_norm(a, s) / g_norm_s if g_norm_s > 0 else 0.0,
        'block_tail_bound': block_tail_bound(N, params.alpha, params.R0) if params.symmetric else float('nan'),
        'matrix_source': matrix.source,
        'min_gap': matrix.min_gap,
    }
    logger.info("expanded boundary data: N=%d residual=%.2e stability=%.3f", N, residual, report['stability_ratio'])
    return a_vec, report


def choose_expansion_size(g: CoeffVector, params: MediumParams, tol: float, n_max: int = 400) -> int:
    """Smallest N with block tail <= tol and coefficient tail of g <= tol."""
    contrast = max(abs(params.alpha), abs(params.beta))
    n_block = select_truncation(contrast, params.R0, tol, n_max=n_max) if contrast > 0 else 1
    tails = np.cumsum(np.abs(g.entries)[::-1])[::-1]
    above = np.nonzero(tails > tol)[0]
    n_data = int(above[-1]) if len(above) else 0
    return int(min(max(n_block, n_data, 1), max(len(g.entries) - 1, 1), n_max))
