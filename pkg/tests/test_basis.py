"""
Tests for the explicit transmission families u_j / v_j.
"""

import numpy as np
import pytest

import models.basis as basis
from models.basis import (
    EVEN, GENERAL, ODD, SYMMETRIC, BasisId, derivative_bound_audit, eval_psi, eval_u, eval_u_gradient,
    general_trace_list, numerical_trace_fourier, trace_fourier,
)
from models.medium import INCLUSION1, MATRIX, ConfigError, DomainError, MediumParams
from scripts.verify import check_transmission, transmission_residual


def _family(params):
    return SYMMETRIC if params.symmetric else GENERAL


def test_zero_contrast_is_harmonic_polynomial(zero_medium, bulk_points):
    """alpha = 0 leaves u_j = Re((z / (i R0))^j) and v_j = Im(...)."""
    pts = bulk_points(50)
    for j in (0, 1, 3, 6):
        expected = (pts / (1j * zero_medium.R0)) ** j
        u = eval_u(BasisId(SYMMETRIC, EVEN, j), pts, zero_medium).value
        assert np.max(np.abs(u - expected.real)) < 1e-14
        if j > 0:
            v = eval_u(BasisId(SYMMETRIC, ODD, j), pts, zero_medium).value
            assert np.max(np.abs(v - expected.imag)) < 1e-14


def test_u0_is_piecewise_constant():
    """u_0 equals 1/a0 everywhere in the symmetric family."""
    params = MediumParams(a0=2.0, b0=2.0, R0=3.0)
    pts = np.array([1j, -1j, 2.5 + 0j, 0.5 + 0.1j])
    u = eval_u(BasisId(SYMMETRIC, EVEN, 0), pts, params).value
    assert np.max(np.abs(u - 0.5)) < 1e-12


def test_parity_in_x1(medium, bulk_points):
    """u_j is even and v_j is odd under x1 -> -x1."""
    pts = bulk_points(30)
    mirror = -np.conj(pts)
    fam = _family(medium)
    for j in (1, 2, 5):
        u = eval_u(BasisId(fam, EVEN, j), pts, medium).value
        u_m = eval_u(BasisId(fam, EVEN, j), mirror, medium).value
        v = eval_u(BasisId(fam, ODD, j), pts, medium).value
        v_m = eval_u(BasisId(fam, ODD, j), mirror, medium).value
        assert np.max(np.abs(u - u_m)) < 1e-12
        assert np.max(np.abs(v + v_m)) < 1e-12


def test_gradient_matches_difference(medium, bulk_points):
    """Termwise gradients agree with central differences away from interfaces."""
    pts = bulk_points(20, margin=0.1)
    fam = _family(medium)
    step = 1e-6
    for parity in (EVEN, ODD):
        bid = BasisId(fam, parity, 3)
        tags = basis.bulk_region_c(pts)
        grad = eval_u_gradient(bid, pts, medium, region=tags).value
        dx = (eval_u(bid, pts + step, medium, region=tags).value
              - eval_u(bid, pts - step, medium, region=tags).value) / (2 * step)
        dy = (eval_u(bid, pts + 1j * step, medium, region=tags).value
              - eval_u(bid, pts - 1j * step, medium, region=tags).value) / (2 * step)
        assert np.max(np.abs(grad[:, 0] - dx)) < 1e-6
        assert np.max(np.abs(grad[:, 1] - dy)) < 1e-6


def test_transmission_suite(medium, trunc):
    """Value and a * flux continuity for j <= 20, both parities, 64 samples per circle."""
    result = check_transmission(medium, trunc, j_max=20, n=64)
    assert result.passed, result.detail


def test_transmission_helper_reports_jumps(mixed_medium):
    """The residual helper sees zero jumps for the exact family member."""
    bid = BasisId(GENERAL, EVEN, 2)
    jumps = transmission_residual(
        lambda p, r: eval_u(bid, p, mixed_medium, region=r).value,
        lambda p, r: eval_u_gradient(bid, p, mixed_medium, region=r).value,
        mixed_medium, n=16,
    )
    assert jumps['value_jump'] < 1e-10
    assert jumps['flux_jump'] < 1e-9


def test_corrupted_reflection_sign_fails_transmission(monkeypatch, symmetric_medium, trunc):
    """Flipping the reflection sign breaks transmission and the check names itself."""
    original = basis.reflection_coefficients

    def corrupted(params, parity):
        ra, rb, ta, tb = original(params, parity)
        return -ra, -rb, ta, tb

    monkeypatch.setattr(basis, 'reflection_coefficients', corrupted)
    result = check_transmission(symmetric_medium, trunc, j_max=3, n=16)
    assert not result.passed
    assert result.name == 'transmission'


def test_gradient_on_interface_needs_hint(symmetric_medium):
    """Interface points need an explicit side."""
    bid = BasisId(SYMMETRIC, EVEN, 2)
    with pytest.raises(DomainError):
        eval_u_gradient(bid, np.array([2j]), symmetric_medium)
    g = eval_u_gradient(bid, np.array([2j]), symmetric_medium, region=MATRIX)
    assert np.all(np.isfinite(g.value))


def test_tangency_point_rejected(symmetric_medium):
    """The tangency point is excluded."""
    with pytest.raises(DomainError):
        eval_u(BasisId(SYMMETRIC, EVEN, 1), np.array([0j]), symmetric_medium)


def test_family_must_match_medium(mixed_medium):
    """The symmetric family needs a0 == b0."""
    with pytest.raises(ConfigError):
        eval_u(BasisId(SYMMETRIC, EVEN, 1), np.array([0.5 + 0j]), mixed_medium)


def test_negative_index_rejected():
    """j must be a non-negative integer."""
    with pytest.raises(DomainError):
        BasisId(SYMMETRIC, EVEN, -1)


def test_psi_recovers_both_parities(symmetric_medium, bulk_points):
    """u_j is R0^-j Re Psi_j of the even table, v_j is R0^-j Im Psi_j of the odd one."""
    pts = bulk_points(10)
    R4 = symmetric_medium.R0 ** 4
    psi_even = eval_psi(BasisId(SYMMETRIC, EVEN, 4), pts, symmetric_medium).value / R4
    psi_odd = eval_psi(BasisId(SYMMETRIC, ODD, 4), pts, symmetric_medium).value / R4
    u = eval_u(BasisId(SYMMETRIC, EVEN, 4), pts, symmetric_medium).value
    v = eval_u(BasisId(SYMMETRIC, ODD, 4), pts, symmetric_medium).value
    assert np.max(np.abs(psi_even.real - u)) < 1e-12
    assert np.max(np.abs(psi_odd.imag - v)) < 1e-12


def test_zero_contrast_trace_is_unit_vector(zero_medium):
    """Without contrast the trace of u_j is e_j."""
    for j in (0, 1, 4):
        c = trace_fourier(BasisId(SYMMETRIC, EVEN, j), zero_medium, n_coeffs=16).entries
        expected = np.zeros(16)
        expected[j] = 1.0
        assert np.max(np.abs(c - expected)) < 1e-14


def test_u0_trace_constant():
    """Trace of u_0 is the constant 1/a0."""
    params = MediumParams(a0=2.0, b0=2.0, R0=3.0)
    c = trace_fourier(BasisId(SYMMETRIC, EVEN, 0), params, n_coeffs=8).entries
    assert c[0] == pytest.approx(0.5, abs=1e-14)
    assert np.max(np.abs(c[1:])) == 0.0


def test_closed_form_trace_matches_quadrature():
    """Closed-form traces agree with 4096-point analysis to 1e-9 for j <= 30 (alpha = 0.8)."""
    params = MediumParams.from_contrasts(0.8, R0=3.0)
    err = 0.0
    for parity in (EVEN, ODD):
        for j in range(0 if parity == EVEN else 1, 31):
            bid = BasisId(SYMMETRIC, parity, j)
            closed = trace_fourier(bid, params, n_coeffs=64).entries
            numeric = numerical_trace_fourier(bid, params, 4096, n_coeffs=64).entries
            err = max(err, float(np.max(np.abs(closed - numeric))))
    assert err <= 1e-9


def test_closed_form_trace_needs_large_radius():
    """R0 <= 2 has no closed-form trace."""
    with pytest.raises(DomainError):
        trace_fourier(BasisId(SYMMETRIC, EVEN, 2), MediumParams(a0=3.0, b0=3.0, R0=2.0))


def test_numerical_trace_grid_size_checked(symmetric_medium):
    """Quadrature traces need a power-of-two grid of at least 256 points."""
    with pytest.raises(ConfigError):
        numerical_trace_fourier(BasisId(SYMMETRIC, EVEN, 1), symmetric_medium, n_quad=300)


def test_general_trace_list_leading_order(mixed_medium):
    """Diagonal near 1 and off-diagonal mass shrinking with j."""
    df = general_trace_list(mixed_medium, n_max=8, n_quad=512)
    even = df[(df['parity'] == EVEN) & (df['j'] >= 1)]
    assert np.all(np.abs(even['diagonal'] - 1.0) < 0.5)
    mass = even['off_diagonal_mass'].to_numpy()
    assert mass[-1] < mass[0]


def test_derivative_bound_trend(mixed_medium):
    """Normalized derivative maxima stay within 10x of their median for j <= 40."""
    for m in ((1, 0), (0, 2), (1, 1)):
        report = derivative_bound_audit(range(1, 41), m, mixed_medium)
        assert report['passed'], report


def test_tail_bound_is_reported(medium, bulk_points):
    """Every evaluation carries a tail bound at or below the policy target."""
    pts = bulk_points(10)
    res = eval_u(BasisId(_family(medium), EVEN, 3), pts, medium)
    assert np.all(np.asarray(res.tail_bound) <= 1e-12)
    assert res.terms_used >= 1


if __name__ == '__main__':
    pytest.main([__file__])
