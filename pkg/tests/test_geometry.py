"""
Tests for the inversion maps, region classification and Mobius reduction.
"""

import numpy as np
import pytest

from geometry.maps import (
    INTERFACE1, INTERFACE2, DiskGeometry, MobiusMap, Point, bulk_region_c, classify, classify_many,
    equal_radius_map, locus_pole, map_xk, map_xk_jet, similarity_ratio, theta,
)
from models.medium import INCLUSION1, INCLUSION2, MATRIX, ConfigError, DomainError


def test_theta_swaps_and_scales():
    """Theta(x) = (x2, x1) / |x|^2."""
    p = theta((3.0, 4.0))
    assert p.x1 == pytest.approx(4.0 / 25.0, abs=1e-15)
    assert p.x2 == pytest.approx(3.0 / 25.0, abs=1e-15)


def test_theta_is_involution(bulk_points):
    """Theta(Theta(x)) = x."""
    for z in bulk_points(20):
        back = theta(theta(complex(z)))
        assert abs(back.z - z) < 1e-14 * max(1.0, abs(z))


def test_theta_rejects_origin():
    """The origin is the pole of Theta."""
    with pytest.raises(DomainError):
        theta(Point(0.0, 0.0))


def test_xk_zero_is_identity():
    """X_0 leaves points unchanged."""
    p = map_xk((0.3, -1.7), 0)
    assert p.x1 == pytest.approx(0.3)
    assert p.x2 == pytest.approx(-1.7)


def test_xk_matches_composition():
    """X_k(x) = Theta(Theta(x) + (k, 0))."""
    z = complex(0.4, 0.9)
    for k in (-3, -1, 1, 2, 5):
        direct = map_xk(z, k).z
        w = theta(z).z + k
        composed = theta(w).z
        assert abs(direct - composed) < 1e-14


def test_xk_jet_derivative_matches_difference():
    """Complex derivative of X_k against a central difference."""
    z = complex(0.7, -0.2)
    step = 1e-6
    for k in (-2, 1, 3):
        _, d = map_xk_jet(z, k)
        fd = (map_xk(z + step, k).z - map_xk(z - step, k).z) / (2 * step)
        assert abs(d - fd) < 1e-8


def test_xk_rejects_pole():
    """X_k is singular where 1 - i k z = 0."""
    with pytest.raises(DomainError):
        map_xk(complex(0.0, -0.5), 2)


def test_similarity_ratio_equals_modulus_ratio(bulk_points):
    """|Theta(x) - y| / |x - Theta(y)| = |y| / |x|."""
    pts = bulk_points(10)
    for x, y in zip(pts[:5], pts[5:]):
        assert similarity_ratio(complex(x), complex(y)) == pytest.approx(abs(y) / abs(x), rel=1e-12)


def test_classify_tags():
    """Bulk tags, interface tags and the tangency tie rule."""
    assert classify(1j) == INCLUSION1
    assert classify(-1j) == INCLUSION2
    assert classify(2.0 + 0j) == MATRIX
    assert classify(2j) == INTERFACE1
    assert classify(-2j) == INTERFACE2
    assert classify(0j) == INTERFACE1


def test_strip_classification_agrees(bulk_points):
    """Disk membership matches Re(i/z) >= 1/2 or <= -1/2 in the strip coordinate."""
    pts = bulk_points(200)
    assert list(classify_many(pts)) == list(bulk_region_c(pts))


def test_geometry_rejects_bad_radii():
    """Radii must be positive."""
    with pytest.raises(ConfigError):
        DiskGeometry(0.0, 1.0)


def test_aspect_root_for_radii_one_two():
    """r1 = 1, r2 = 2 gives t = 4 + sqrt(15)."""
    m = equal_radius_map(DiskGeometry(1.0, 2.0))
    assert m.aspect == pytest.approx(4.0 + np.sqrt(15.0), abs=1e-12)


@pytest.mark.parametrize('r1,r2', [(1.0, 2.0), (2.0, 1.0), (1.0, 1.5)])
def test_equal_radius_map_normalizes_disks(r1, r2):
    """Both circles land on |w -+ i| = 1 and the tangency point on the origin."""
    geo = DiskGeometry(r1, r2)
    m = equal_radius_map(geo)
    t = np.linspace(0.1, 2 * np.pi - 0.1, 50)
    w1 = m.forward(geo.center1 + r1 * np.exp(1j * t))
    w2 = m.forward(geo.center2 + r2 * np.exp(1j * t))
    assert np.max(np.abs(np.abs(w1 - 1j) - 1.0)) < 1e-12
    assert np.max(np.abs(np.abs(w2 + 1j) - 1.0)) < 1e-12
    assert abs(m.forward(0j)) < 1e-12
    assert abs(m.forward(geo.center1) - 1j) < 1.0
    assert m.relabeled == (r1 > r2)


def test_image_radii_agree():
    """Fitted image radii are equal."""
    geo = DiskGeometry(1.0, 2.0)
    m = equal_radius_map(geo)
    _, rad1 = m.image_circle(geo.center1, geo.r1)
    _, rad2 = m.image_circle(geo.center2, geo.r2)
    assert abs(rad1 - rad2) < 1e-10
    assert rad1 == pytest.approx(1.0, abs=1e-10)


def test_mobius_inverse_and_derivative():
    """inverse(forward(z)) = z and derivative matches a difference quotient."""
    m = equal_radius_map(DiskGeometry(1.0, 2.0))
    z = np.array([0.3 + 0.2j, -1.1 - 0.4j, 2.0 + 0.5j])
    assert np.max(np.abs(m.inverse(m.forward(z)) - z)) < 1e-12
    step = 1e-6
    fd = (m.forward(z + step) - m.forward(z - step)) / (2 * step)
    assert np.max(np.abs(fd - m.derivative(z)) / np.abs(m.derivative(z))) < 1e-7


def test_equal_radii_map_is_scaling():
    """Equal radii only rescale."""
    m = equal_radius_map(DiskGeometry(2.0, 2.0))
    assert m.pole is None
    assert m.scale == pytest.approx(0.5)
    assert MobiusMap(pole=None, lam=1.0, translation=0.0).is_identity


def test_locus_poles_give_equal_image_radii():
    """Every pole on |z0|^2 = Q Im z0 equalizes the image radii; a plain rescaling of iQ does not."""
    geo = DiskGeometry(1.0, 2.0)
    for angle in (0.0, 0.7, -1.9, 2.8):
        pole = locus_pole(geo, angle)
        assert abs(pole) ** 2 == pytest.approx(8.0 * pole.imag, abs=1e-12)
        radii = [r / abs(abs(c - pole) ** 2 - r * r) for c, r in ((geo.center1, 1.0), (geo.center2, 2.0))]
        assert radii[0] == pytest.approx(radii[1], rel=1e-12)
    pole = 16j
    radii = [r / abs(abs(c - pole) ** 2 - r * r) for c, r in ((geo.center1, 1.0), (geo.center2, 2.0))]
    assert abs(radii[0] - radii[1]) > 1e-3


def test_off_center_exclusion_moves_pole_along_locus():
    """The pole leaves the axis when the farthest locus point is blocked."""
    geo = DiskGeometry(1.0, 2.0)
    m = equal_radius_map(geo, exclusion=(6j, 2.5))
    assert m.locus_angle != 0.0
    assert abs(m.pole - 6j) >= 3.5
    assert abs(m.pole - 4j) == pytest.approx(4.0, abs=1e-12)
    assert abs(m.locus_angle) == pytest.approx(np.arccos(0.484375), abs=np.pi / 360.0)
    for center, radius, target in ((geo.center1, 1.0, 1j), (geo.center2, 2.0, -1j)):
        c, rad = m.image_circle(center, radius)
        assert rad == pytest.approx(1.0, abs=1e-10)
        assert abs(c - target) < 1e-10
    assert abs(m.forward(0j)) < 1e-12
    assert m.to_dict()['locus_angle'] == m.locus_angle


def test_default_map_uses_farthest_locus_point():
    """With a centered exclusion the pole is +-iQ."""
    assert equal_radius_map(DiskGeometry(1.0, 2.0)).pole == pytest.approx(8j, abs=1e-12)
    m = equal_radius_map(DiskGeometry(2.0, 1.0))
    assert m.pole == pytest.approx(-8j, abs=1e-12)
    assert m.locus_angle == 0.0


def test_pole_inside_working_region_rejected():
    """No locus point clears B_7.5 by 1 since |pole| <= Q = 8."""
    with pytest.raises(ConfigError):
        equal_radius_map(DiskGeometry(1.0, 2.0), exclusion=(0.0, 7.5))


if __name__ == '__main__':
    pytest.main([__file__])
