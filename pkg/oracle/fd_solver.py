"""
Finite-Volume Transmission Solver

Independent brute-force solver for div(a grad u) = div f + s on B_{R0}:
- Uniform cell-centered grid with coefficients sampled from the exact disks
- Harmonic-mean face coefficients, five-point flux stencil
- Dirichlet data on the first ring of cells outside B_{R0}
- Sparse direct or conjugate-gradient solve with a residual contract
- Comparison of analytic samples against the discrete solution
"""

import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse import linalg as spla

from geometry.maps import UNIT_DISKS, DiskGeometry, signed_distances
from models.coeffmatrix import write_csv
from models.medium import (
    INCLUSION1, INCLUSION2, MATRIX, BULK_REGIONS, ConfigError, ConvergenceError,
    DomainError, MediumParams,
)

logger = logging.getLogger(__name__)

_INTERIOR = 0
_GHOST = 1
_OUTSIDE = 2


@dataclass
class Grid:
    """
    Uniform cell-centered grid on [-L, L]^2 covering B_{R0}.

    Cells whose centers lie inside B_{R0} are unknowns; their neighbors outside
    carry Dirichlet data.
    """

    h: float
    R0: float
    geo: DiskGeometry
    params: MediumParams
    centers: np.ndarray
    region: np.ndarray
    a: np.ndarray
    kind: np.ndarray

    @classmethod
    def build(cls, h: float, params: MediumParams, geo: DiskGeometry = UNIT_DISKS) -> 'Grid':
        """
        Lay out the grid and sample the coefficient at cell centers.

        Raises:
            ConfigError: if h > min(r1, r2) / 16
        """
        r_min = min(geo.r1, geo.r2)
        if not 0 < h <= r_min / 16.0:
            raise ConfigError(f"Grid spacing h={h} does not resolve disks of radius {r_min} (need h <= {r_min / 16})")
        R0 = params.R0
        n_half = int(np.ceil((R0 + 2.0 * h) / h))
        coords = (np.arange(-n_half, n_half) + 0.5) * h
        X1, X2 = np.meshgrid(coords, coords, indexing='ij')
        centers = X1 + 1j * X2

        d1, d2 = signed_distances(centers, geo)
        region = np.full(centers.shape, MATRIX, dtype=object)
        region[d2 < 0] = INCLUSION2
        region[d1 < 0] = INCLUSION1
        # cells touching the tangency point keep the matrix coefficient
        region[np.abs(centers) < h] = MATRIX
        a = np.ones(centers.shape)
        a[region == INCLUSION1] = params.a0
        a[region == INCLUSION2] = params.b0

        inside = np.abs(centers) < R0
        kind = np.full(centers.shape, _OUTSIDE, dtype=int)
        kind[inside] = _INTERIOR
        near = np.zeros(centers.shape, dtype=bool)
        near[1:, :] |= inside[:-1, :]
        near[:-1, :] |= inside[1:, :]
        near[:, 1:] |= inside[:, :-1]
        near[:, :-1] |= inside[:, 1:]
        kind[near & ~inside] = _GHOST
        logger.info("FD grid h=%.4g: %d unknowns", h, int(inside.sum()))
        return cls(h=h, R0=R0, geo=geo, params=params, centers=centers, region=region, a=a, kind=kind)

    @property
    def shape(self):
        return self.centers.shape

    @property
    def n_unknowns(self) -> int:
        return int(np.sum(self.kind == _INTERIOR))

    def interior_mask(self) -> np.ndarray:
        return self.kind == _INTERIOR

    def comparison_mask(self, band: Optional[float] = None, stride: int = 1) -> np.ndarray:
        """
        Interior cells away from the interfaces and the cusp.

        Args:
            band: Half-width excluded about each interface circle (default 2h)
            stride: Keep every stride-th cell in each direction
        """
        band = 2.0 * self.h if band is None else band
        d1, d2 = signed_distances(self.centers, self.geo)
        mask = self.interior_mask()
        mask &= np.abs(d1) > band
        mask &= np.abs(d2) > band
        mask &= np.abs(self.centers) > 4.0 * self.h
        mask &= np.abs(self.centers) < self.R0 - self.h
        if stride > 1:
            sub = np.zeros(self.shape, dtype=bool)
            sub[::stride, ::stride] = True
            mask &= sub
        return mask


@dataclass
class LinearSystem:
    grid: Grid
    matrix: sparse.csr_matrix
    rhs: np.ndarray
    index: np.ndarray


def _harmonic(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return 2.0 * a * b / (a + b)


def assemble(grid: Grid, boundary: Callable[[np.ndarray], np.ndarray], rhs=None, source=None) -> LinearSystem:
    """
    Assemble the flux-conservative five-point system.

    Args:
        grid: Grid from Grid.build
        boundary: theta -> Dirichlet values on |x| = R0
        rhs: Optional vector field f (a PiecewiseField or z, regions -> f1 + i f2)
        source: Optional scalar source s (same calling convention)

    Returns:
        LinearSystem with the SPD matrix, right-hand side and cell index map
    """
    inside = grid.interior_mask()
    index = -np.ones(grid.shape, dtype=int)
    index[inside] = np.arange(int(inside.sum()))
    n = int(inside.sum())
    h = grid.h

    F = np.zeros(grid.shape, dtype=complex)
    if rhs is not None:
        F = np.asarray(rhs(grid.centers.ravel(), grid.region.ravel()), dtype=complex).reshape(grid.shape)
    b = np.zeros(n)
    if source is not None:
        S = np.asarray(source(grid.centers.ravel(), grid.region.ravel()), dtype=float).reshape(grid.shape)
        b -= h * h * S[inside]

    ghost = grid.kind == _GHOST
    g = np.zeros(grid.shape)
    if np.any(ghost):
        g[ghost] = np.asarray(boundary(np.angle(grid.centers[ghost])), dtype=float)

    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    # (axis shift, outward normal of the face as a complex number)
    for di, dj, normal in ((1, 0, 1.0), (-1, 0, -1.0), (0, 1, 1j), (0, -1, -1j)):
        sl_p = (slice(max(-di, 0), grid.shape[0] - max(di, 0)), slice(max(-dj, 0), grid.shape[1] - max(dj, 0)))
        sl_n = (slice(max(di, 0), grid.shape[0] - max(-di, 0)), slice(max(dj, 0), grid.shape[1] - max(-dj, 0)))
        a_p = grid.a[sl_p]
        a_n = grid.a[sl_n]
        face = _harmonic(a_p, a_n)
        f_face = np.real(np.conj(0.5 * (F[sl_p] + F[sl_n])) * normal)
        ip = index[sl_p]
        in_n = index[sl_n]
        kind_n = grid.kind[sl_n]
        live = ip >= 0

        np.add.at(diag, ip[live], face[live])
        np.add.at(b, ip[live], -h * f_face[live])
        coupled = live & (in_n >= 0)
        rows.append(ip[coupled])
        cols.append(in_n[coupled])
        vals.append(-face[coupled])
        bnd = live & (kind_n == _GHOST)
        np.add.at(b, ip[bnd], face[bnd] * g[sl_n][bnd])

    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    A = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    return LinearSystem(grid=grid, matrix=A, rhs=b, index=index)


@dataclass
class DiscreteSolution:
    """Cell-centered solution values (NaN outside B_{R0})."""

    grid: Grid
    values: np.ndarray
    residual: float

    @property
    def h(self) -> float:
        return self.grid.h

    def at(self, points) -> np.ndarray:
        """Nearest-cell lookup."""
        z = np.atleast_1d(np.asarray(points, dtype=complex))
        n_half = self.grid.shape[0] // 2
        i = np.clip(np.floor(z.real / self.h).astype(int) + n_half, 0, self.grid.shape[0] - 1)
        j = np.clip(np.floor(z.imag / self.h).astype(int) + n_half, 0, self.grid.shape[1] - 1)
        return self.values[i, j]

    def to_frame(self) -> pd.DataFrame:
        mask = self.grid.interior_mask()
        z = self.grid.centers[mask]
        return pd.DataFrame({
            'x1': z.real,
            'x2': z.imag,
            'region': self.grid.region[mask],
            'a': self.grid.a[mask],
            'u': self.values[mask],
        })

    def save_results(self, output_path: str, header: Optional[Dict[str, Any]] = None) -> pd.DataFrame:
        df = self.to_frame()
        lines = {'h': repr(self.h), 'R0': repr(self.grid.R0), 'residual': repr(self.residual)}
        lines.update(header or {})
        write_csv(df, output_path, lines)
        return df


def solve_system(system: LinearSystem, tol: float = 1e-10, method: str = 'direct',
                 maxiter: int = 20000) -> DiscreteSolution:
    """
    Solve the assembled system and check the relative residual.

    Raises:
        ConvergenceError: residual above tol or iterative solver breakdown
    """
    A, b = system.matrix, system.rhs
    if method == 'direct':
        u = spla.spsolve(A.tocsc(), b)
    elif method == 'cg':
        inv_diag = 1.0 / A.diagonal()
        M = spla.LinearOperator(A.shape, matvec=lambda v: inv_diag * v)
        u, info = spla.cg(A, b, rtol=tol * 0.1, maxiter=maxiter, M=M)
        if info != 0:
            raise ConvergenceError(f"CG did not converge (info={info})", requested=tol)
    else:
        raise ConfigError(f"Unknown solver method: {method}")

    norm_b = float(np.linalg.norm(b))
    res = float(np.linalg.norm(A @ u - b)) / norm_b if norm_b > 0 else float(np.linalg.norm(A @ u))
    if res > tol:
        raise ConvergenceError(f"FD residual {res:.2e} above {tol:.1e}", achieved=res, requested=tol)
    values = np.full(system.grid.shape, np.nan)
    mask = system.index >= 0
    values[mask] = u[system.index[mask]]
    logger.info("FD solve: %d unknowns, residual %.2e", len(u), res)
    return DiscreteSolution(grid=system.grid, values=values, residual=res)


def compare(sample, solution: DiscreteSolution, norm: str = 'L2', band: Optional[float] = None) -> Dict[str, Any]:
    """
    Relative discrepancy between analytic samples and the discrete solution.

    Args:
        sample: Object with complex ``points``, ``u`` values and ``region`` tags
            (a FieldSample), evaluated at cell centers
        solution: FD solution
        norm: 'L2' (root-mean-square) or 'Linf'
        band: Interface exclusion half-width (default 2h); a 4h disk about
            the cusp is always excluded

    Raises:
        DomainError: if nothing is left to compare
    """
    if norm not in ('L2', 'Linf'):
        raise ConfigError(f"Unknown norm: {norm}")
    band = 2.0 * solution.h if band is None else band
    z = np.asarray(sample.points, dtype=complex)
    ua = np.asarray(sample.u, dtype=float)
    tags = np.asarray(sample.region, dtype=object)
    d1, d2 = signed_distances(z, solution.grid.geo)
    keep = (np.abs(d1) > band) & (np.abs(d2) > band) & (np.abs(z) > 4.0 * solution.h)
    ub = solution.at(z)
    keep &= np.isfinite(ub)
    if not np.any(keep):
        raise DomainError("Empty comparison set after exclusions")

    def rel(mask):
        diff = ua[mask] - ub[mask]
        if norm == 'L2':
            den = np.sqrt(np.mean(ub[mask] ** 2))
            num = np.sqrt(np.mean(diff ** 2))
        else:
            den = np.max(np.abs(ub[mask]))
            num = np.max(np.abs(diff))
        return float(num / den) if den > 0 else float(num)

    report = {
        'norm': norm,
        'h': solution.h,
        'n_points': int(keep.sum()),
        'relative_error': rel(keep),
        'per_region': {},
    }
    for region in BULK_REGIONS:
        mask = keep & (tags == region)
        if np.any(mask):
            report['per_region'][region] = rel(mask)
    return report


def solve_fd(params: MediumParams, h: float, boundary: Callable[[np.ndarray], np.ndarray],
             rhs=None, source=None, geo: DiskGeometry = UNIT_DISKS, tol: float = 1e-10,
             method: str = 'direct') -> DiscreteSolution:
    """Grid, assemble and solve in one call."""
    grid = Grid.build(h, params, geo)
    return solve_system(assemble(grid, boundary, rhs, source), tol=tol, method=method)
