"""
Tests for the finite-volume oracle.
"""

import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from models.dirichlet import (
    FieldSample, FourierBoundary, evaluate_solution, solve_homogeneous, solve_nonhomogeneous,
)
from models.medium import INCLUSION1, INCLUSION2, MATRIX, ConfigError, DomainError, MediumParams
from models.potential import PiecewiseField
from oracle.fd_solver import Grid, assemble, compare, solve_fd, solve_system


def _analytic_vs_fd(params, h, stride=4):
    g = FourierBoundary.from_modes(params.R0, sin_theta={1: 1.0})
    sol = solve_homogeneous(g, params)
    fd = solve_fd(params, h, np.sin)
    cells = fd.grid.centers[fd.grid.comparison_mask(stride=stride)]
    sample = evaluate_solution(sol, cells, gradient=False)
    return compare(sample, fd)


def test_grid_spacing_checked(symmetric_medium):
    """h must resolve the smaller disk by 16 cells per radius."""
    with pytest.raises(ConfigError):
        Grid.build(0.1, symmetric_medium)
    with pytest.raises(ConfigError):
        Grid.build(-0.01, symmetric_medium)


def test_grid_layout(symmetric_medium):
    """Interior cells fill B_R0, coefficients follow the disks."""
    grid = Grid.build(1.0 / 32, symmetric_medium)
    inside = grid.interior_mask()
    assert np.all(np.abs(grid.centers[inside]) < 3.0)
    assert grid.n_unknowns == int(inside.sum())
    assert np.all(grid.a[grid.region == INCLUSION1] == 5.0)
    assert np.all(grid.a[grid.region == MATRIX] == 1.0)
    mask = grid.comparison_mask(stride=3)
    assert np.any(mask)
    assert not np.any(mask & ~inside)


def test_constant_data_is_exact(mixed_medium):
    """g = 1 gives u = 1 to solver precision."""
    fd = solve_fd(mixed_medium, 1.0 / 32, lambda t: np.ones_like(t))
    inside = fd.grid.interior_mask()
    assert np.max(np.abs(fd.values[inside] - 1.0)) < 1e-10
    assert np.all(np.isnan(fd.values[~inside]))


def test_even_data_gives_even_solution(mixed_medium):
    """Data even in x1 on a grid symmetric about x1 = 0 gives a mirrored solution."""
    fd = solve_fd(mixed_medium, 1.0 / 32, np.sin)
    inside = fd.grid.interior_mask()
    mirrored = fd.values[::-1, :]
    assert np.max(np.abs(fd.values[inside] - mirrored[inside])) < 1e-9


def test_zero_contrast_linear_solution(zero_medium):
    """With a = 1, cos theta extends to x1 / R0 up to O(h)."""
    fd = solve_fd(zero_medium, 1.0 / 32, np.cos)
    inside = fd.grid.interior_mask()
    exact = fd.grid.centers.real / 3.0
    assert np.max(np.abs(fd.values[inside] - exact[inside])) < 0.05


def test_uniform_field_has_no_effect(zero_medium):
    """A constant f has zero divergence and leaves the solution unchanged."""
    f = PiecewiseField.uniform(lambda z: np.full(np.shape(z), 1.0 + 2.0j))
    plain = solve_fd(zero_medium, 1.0 / 32, np.cos)
    forced = solve_fd(zero_medium, 1.0 / 32, np.cos, rhs=f)
    inside = plain.grid.interior_mask()
    assert np.max(np.abs(plain.values[inside] - forced.values[inside])) < 1e-10


def test_cg_matches_direct(symmetric_medium):
    """Preconditioned CG agrees with the sparse direct solve."""
    grid = Grid.build(1.0 / 32, symmetric_medium)
    system = assemble(grid, np.sin)
    direct = solve_system(system)
    cg = solve_system(system, tol=1e-10, method='cg')
    inside = grid.interior_mask()
    assert np.max(np.abs(direct.values[inside] - cg.values[inside])) < 1e-5


def test_unknown_solver_rejected(symmetric_medium):
    """Only 'direct' and 'cg' are solver methods."""
    system = assemble(Grid.build(1.0 / 32, symmetric_medium), np.sin)
    with pytest.raises(ConfigError):
        solve_system(system, method='gmres')


def test_analytic_agreement(symmetric_medium):
    """The series solution and the oracle agree to first order at h = 1/32."""
    report = _analytic_vs_fd(symmetric_medium, 1.0 / 32)
    assert report['relative_error'] < 0.05
    assert set(report['per_region']) == {INCLUSION1, INCLUSION2, MATRIX}
    assert report['n_points'] > 100


def _mixed_boundary(theta):
    return np.cos(2 * theta) + 0.3 * np.sin(theta)


def _mixed_vs_fd(h, f=None, stride=16):
    params = MediumParams(a0=5.0, b0=0.5, R0=3.0)
    g = FourierBoundary.from_modes(3.0, cos_theta={2: 1.0}, sin_theta={1: 0.3})
    if f is None:
        sol = solve_homogeneous(g, params, tol=1e-8)
    else:
        sol = solve_nonhomogeneous(f, g, params, tol=1e-8)
    fd = solve_fd(params, h, _mixed_boundary, rhs=f)
    mask = fd.grid.comparison_mask(stride=stride)
    sample = evaluate_solution(sol, fd.grid.centers[mask], fd.grid.region[mask], gradient=False)
    return compare(sample, fd)


@pytest.mark.slow
def test_oracle_agreement_refines():
    """a0 = 5, b0 = 0.5: within 1e-2 at h = 1/128 and closer at h = 1/256."""
    coarse = _mixed_vs_fd(1.0 / 128, stride=8)
    fine = _mixed_vs_fd(1.0 / 256, stride=16)
    assert coarse['relative_error'] <= 1e-2
    assert fine['relative_error'] < coarse['relative_error']


@pytest.mark.slow
def test_oracle_agreement_with_field():
    """Piecewise-constant f: within 2e-2 at h = 1/128."""
    f = PiecewiseField.constant({INCLUSION1: 1.0 + 0j, MATRIX: 0.5j})
    report = _mixed_vs_fd(1.0 / 128, f=f, stride=32)
    assert report['relative_error'] <= 2e-2


def test_compare_validation(symmetric_medium):
    """Unknown norms and empty comparison sets are errors."""
    fd = solve_fd(symmetric_medium, 1.0 / 32, np.sin)
    near_cusp = FieldSample(
        points=np.array([0.01 + 0.01j]), region=np.array([MATRIX], dtype=object),
        u=np.zeros(1), grad=np.zeros((1, 2)), tail_bound=np.zeros(1),
    )
    with pytest.raises(ConfigError):
        compare(near_cusp, fd, norm='L3')
    with pytest.raises(DomainError):
        compare(near_cusp, fd)


def test_linf_norm(symmetric_medium):
    """Both norms report on the same point set."""
    g = FourierBoundary.from_modes(3.0, sin_theta={1: 1.0})
    sol = solve_homogeneous(g, symmetric_medium)
    fd = solve_fd(symmetric_medium, 1.0 / 32, np.sin)
    cells = fd.grid.centers[fd.grid.comparison_mask(stride=6)]
    sample = evaluate_solution(sol, cells, gradient=False)
    l2 = compare(sample, fd, 'L2')
    linf = compare(sample, fd, 'Linf')
    assert linf['norm'] == 'Linf'
    assert linf['n_points'] == l2['n_points']
    assert 0.0 < linf['relative_error'] < 0.1


def test_discrete_solution_dump(symmetric_medium):
    """Grid dump carries h, R0 and the residual in its header."""
    fd = solve_fd(symmetric_medium, 1.0 / 32, np.sin)
    with tempfile.TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / 'fd.csv'
        fd.save_results(str(path), {'seed': 42})
        text = path.read_text()
        df = pd.read_csv(path, comment='#', float_precision='round_trip')
    assert text.startswith('# h=0.03125')
    assert list(df.columns) == ['x1', 'x2', 'region', 'a', 'u']
    assert len(df) == fd.grid.n_unknowns
    assert set(df['region']) == {INCLUSION1, INCLUSION2, MATRIX}
    assert np.array_equal(df['u'].to_numpy(), fd.values[fd.grid.interior_mask()])


if __name__ == '__main__':
    pytest.main([__file__])
