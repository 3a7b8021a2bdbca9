"""
Tests for the change-of-basis matrix and the boundary expansion.
"""

import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from models.basis import EVEN, ODD, SYMMETRIC, BasisId, numerical_trace_fourier, trace_fourier
from models.coeffmatrix import (
    b_entry, binomial_identity_residual, block_tail_bound, build_truncated, column_abs_sum,
    expand_boundary, expansion_matrix, lp_s_norm, select_truncation, signed_even_column_sum,
)
from models.medium import CoeffVector, DomainError, MediumParams


def test_zero_contrast_gives_identity():
    """alpha = 0 makes M the identity."""
    m = build_truncated(10, 0.0, 3.0)
    assert np.array_equal(m.entries, np.eye(11))


def test_structural_zeros():
    """Column 0 and mixed-parity entries vanish exactly."""
    assert b_entry(4, 0, 0.8, 3.0).value == 0.0
    assert b_entry(2, 3, 0.8, 3.0).value == 0.0
    assert b_entry(1, 3, 0.8, 3.0).value != 0.0


@pytest.mark.parametrize('alpha', [0.9, -0.9])
@pytest.mark.parametrize('R0', [2.05, 3.0, 5.0])
def test_columns_are_dominant(alpha, R0):
    """Off-identity column sums stay below 1 for j <= 200."""
    sums = [column_abs_sum(j, alpha, R0)['value'] for j in range(1, 201)]
    assert max(sums) < 1.0


@pytest.mark.parametrize('alpha', [0.9, -0.9])
def test_odd_column_closed_form_matches_entries(alpha):
    """Closed-form odd column sums agree with entrywise summation."""
    for j in (1, 3, 7):
        entrywise = sum(abs(b_entry(l, j, alpha, 3.0).value) for l in range(1, 121))
        closed = column_abs_sum(j, alpha, 3.0)['value']
        assert abs(entrywise - closed) <= 1e-10


def test_even_column_bound_dominates_entries():
    """The even-column figure bounds the entrywise sum."""
    for j in (2, 4, 8):
        entrywise = sum(abs(b_entry(l, j, 0.8, 3.0).value) for l in range(1, 121))
        assert entrywise <= column_abs_sum(j, 0.8, 3.0)['value'] + 1e-12


def test_signed_even_sum_requires_even_column():
    """Odd columns have no signed even-column diagnostic."""
    assert signed_even_column_sum(2, 0.8, 3.0) >= 0.0
    with pytest.raises(DomainError):
        signed_even_column_sum(3, 0.8, 3.0)


def test_binomial_identity():
    """Odd-power binomial sums match their closed form."""
    for j in (1, 3, 5):
        assert binomial_identity_residual(j, 1, 3.0) < 1e-12


def test_block_tail_bound_behaviour():
    """Zero for alpha = 0, decreasing in N otherwise."""
    assert block_tail_bound(5, 0.0, 3.0) == 0.0
    values = [block_tail_bound(N, 0.8, 3.0) for N in (5, 10, 20, 40)]
    assert all(b > a for a, b in zip(values[1:], values[:-1]))


def test_block_tail_bound_rate():
    """The row-summed bound shrinks by (R0 - 1)^2 per N -> N + 2, i.e. 4 at R0 = 3."""
    ratio = block_tail_bound(22, 0.5, 3.0) / block_tail_bound(20, 0.5, 3.0)
    assert ratio == pytest.approx(0.25, rel=1e-3)
    assert block_tail_bound(20, 0.5, 3.0) >= 0.5 * 3.0 ** -21


def test_select_truncation_is_smallest():
    """The chosen N meets the tolerance and N - 1 does not."""
    N = select_truncation(0.8, 3.0, 1e-10)
    assert block_tail_bound(N, 0.8, 3.0) <= 1e-10
    assert block_tail_bound(N - 1, 0.8, 3.0) > 1e-10


def test_matrix_rejects_small_radius():
    """Matrix operations need R0 > 2."""
    with pytest.raises(DomainError):
        build_truncated(5, 0.5, 2.0)
    with pytest.raises(DomainError):
        b_entry(1, 1, 0.5, 1.5)


def test_truncated_matrix_is_dominant():
    """alpha = 0.8, R0 = 3, N = 100: every gap positive."""
    m = build_truncated(100, 0.8, 3.0)
    assert np.all(m.gaps > 0)
    assert m.entries[0, 0] == pytest.approx(1.0 / 9.0)


def test_expansion_of_basis_trace_is_unit_vector():
    """g = trace(u_3) expands to e_3."""
    params = MediumParams.from_contrasts(0.8, R0=3.0)
    g = trace_fourier(BasisId(SYMMETRIC, EVEN, 3), params, n_coeffs=200)
    a, report = expand_boundary(g, None, params, tol=1e-12)
    target = np.zeros(len(a))
    target[3] = 1.0
    assert np.max(np.abs(a.entries - target)) <= 1e-9
    assert report['matrix_source'] == 'closed-form'


def test_expansion_of_cos_two_theta_resynthesizes():
    """cos 2 theta is recovered from its expansion."""
    params = MediumParams.from_contrasts(0.8, R0=3.0)
    g = np.zeros(128)
    g[2] = -1.0  # cos 2 theta = -cos 2 phi
    a, report = expand_boundary(CoeffVector(g), None, params, tol=1e-10)
    synth = np.zeros(128)
    for j, c in enumerate(a.entries):
        synth += c * trace_fourier(BasisId(SYMMETRIC, EVEN, j), params, n_coeffs=128).entries
    assert np.sum(np.abs(synth - g)) <= 1e-8
    assert report['block_tail_bound'] <= 1e-10


def test_odd_expansion_uses_quadrature_columns():
    """Odd data expands over v_j through a quadrature matrix."""
    params = MediumParams(a0=5.0, b0=5.0, R0=3.0)
    g = numerical_trace_fourier(BasisId(SYMMETRIC, ODD, 2), params, 1024)
    a, report = expand_boundary(g, 30, params, tol=1e-12)
    target = np.zeros(31)
    target[2] = 1.0
    assert np.max(np.abs(a.entries - target)) <= 1e-9
    assert report['matrix_source'] == 'quadrature'
    m = expansion_matrix(10, params, ODD)
    assert m.entries[0, 0] == 1.0
    assert np.all(m.entries[0, 1:] == 0.0)


def test_lp_s_norm():
    """Weighted norm with weights (1 + j)^(2s)."""
    assert lp_s_norm(np.array([3.0, 4.0]), 0.0) == pytest.approx(5.0)
    assert lp_s_norm(np.array([3.0, 4.0]), 1.0) == pytest.approx(np.sqrt(73.0))
    assert lp_s_norm(CoeffVector(np.array([3.0, 4.0]), s_weight=1.0)) == pytest.approx(np.sqrt(73.0))


def test_matrix_dump():
    """Matrix CSV carries the header block and (row, col, value) columns."""
    m = build_truncated(4, 0.5, 3.0)
    with tempfile.TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / 'matrix.csv'
        m.save_results(str(path), {'config_hash': 'abc'})
        lines = path.read_text().splitlines()
        assert lines[0].startswith('# ')
        assert any(line == '# config_hash=abc' for line in lines)
        df = pd.read_csv(path, comment='#', float_precision='round_trip')
    assert list(df.columns) == ['row', 'col', 'value']
    assert len(df) == 25
    back = df['value'].to_numpy().reshape(5, 5)
    assert np.array_equal(back, m.entries)


if __name__ == '__main__':
    pytest.main([__file__])
