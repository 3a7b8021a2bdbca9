"""
Conformal Maps and Region Classification for Two Tangent Disks

Implements:
- The inversion-reflection Theta(x) = (x2, x1) / |x|^2, i.e. z -> i / z
- The shifted maps X_k = Theta(Theta(.) + k) and their complex derivatives
- Region classification against the two tangent disks
- The Mobius reduction of unequal radii to the canonical unit pair
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np

from models.medium import (
    INCLUSION1, INCLUSION2, MATRIX, ConfigError, DomainError, as_complex,
)

logger = logging.getLogger(__name__)

INTERFACE1 = 'interface1'
INTERFACE2 = 'interface2'
DEFAULT_BAND = 1e-9
POLE_TOL = 1e-12


class Point(NamedTuple):
    """A point of the plane; z = x1 + i x2."""

    x1: float
    x2: float

    @property
    def z(self) -> complex:
        return complex(self.x1, self.x2)

    @classmethod
    def from_complex(cls, z: complex) -> 'Point':
        return cls(float(np.real(z)), float(np.imag(z)))


PointLike = Union[Point, complex, Tuple[float, float], np.ndarray]


@dataclass(frozen=True)
class DiskGeometry:
    """Upper disk B_{r1}(0, r1) and lower disk B_{r2}(0, -r2), tangent at the origin."""

    r1: float = 1.0
    r2: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.r1) and np.isfinite(self.r2) and self.r1 > 0 and self.r2 > 0):
            raise ConfigError(f"Disk radii must be positive, got r1={self.r1}, r2={self.r2}")

    @property
    def center1(self) -> complex:
        return 1j * self.r1

    @property
    def center2(self) -> complex:
        return -1j * self.r2

    @property
    def canonical(self) -> bool:
        return self.r1 == 1.0 and self.r2 == 1.0


UNIT_DISKS = DiskGeometry(1.0, 1.0)


def _to_point(p: PointLike) -> complex:
    z = as_complex(p)
    if z.size != 1:
        raise DomainError("Expected a single point")
    return complex(z[0])


def theta_c(z: np.ndarray) -> np.ndarray:
    """Vectorized Theta on complex input; caller guarantees z != 0."""
    return 1j / z


def theta(p: PointLike) -> Point:
    """
    Inversion-reflection Theta(x) = (x2/|x|^2, x1/|x|^2).

    Raises:
        DomainError: at the origin (pole of the map)
    """
    z = _to_point(p)
    if abs(z) <= POLE_TOL:
        raise DomainError("Theta is singular at the origin")
    return Point.from_complex(1j / z)


def xk_c(z: np.ndarray, k) -> np.ndarray:
    """Vectorized X_k(z) = z / (1 - i k z) with broadcasting in z and k."""
    return z / (1.0 - 1j * np.asarray(k) * z)


def xk_derivative_c(z: np.ndarray, k) -> np.ndarray:
    """Vectorized dX_k/dz = 1 / (1 - i k z)^2."""
    return 1.0 / (1.0 - 1j * np.asarray(k) * z) ** 2


def _check_xk(z: complex, k: int):
    if abs(z) <= POLE_TOL:
        raise DomainError("X_k is undefined at the origin")
    if abs(1.0 - 1j * k * z) <= POLE_TOL * max(1.0, abs(k * z)):
        raise DomainError(f"Point hits the pole of X_{k}")


def map_xk(p: PointLike, k: int) -> Point:
    """X_k(x) = Theta(Theta(x) + (k, 0))."""
    z = _to_point(p)
    _check_xk(z, k)
    return Point.from_complex(z / (1.0 - 1j * k * z))


def map_xk_jet(p: PointLike, k: int) -> Tuple[Point, complex]:
    """X_k(x) together with its complex derivative dX_k/dz."""
    z = _to_point(p)
    _check_xk(z, k)
    d = 1.0 - 1j * k * z
    return Point.from_complex(z / d), complex(1.0 / d ** 2)


def similarity_ratio(x: PointLike, y: PointLike) -> float:
    """|Theta(x) - y| / |x - Theta(y)|, which equals |y| / |x|."""
    zx, zy = _to_point(x), _to_point(y)
    if abs(zx) <= POLE_TOL or abs(zy) <= POLE_TOL:
        raise DomainError("similarity ratio needs nonzero points")
    den = abs(zx - 1j / zy)
    if den == 0.0:
        raise DomainError("x coincides with Theta(y)")
    return abs(1j / zx - zy) / den


def signed_distances(z: np.ndarray, geo: DiskGeometry = UNIT_DISKS) -> Tuple[np.ndarray, np.ndarray]:
    """Signed distances of points to the two circles (negative inside)."""
    d1 = np.abs(z - geo.center1) - geo.r1
    d2 = np.abs(z - geo.center2) - geo.r2
    return d1, d2


def classify_many(points, geo: DiskGeometry = UNIT_DISKS, band: float = DEFAULT_BAND) -> np.ndarray:
    """Vectorized region tags; Interface1 wins ties at the tangency point."""
    if band < 0:
        raise ConfigError("band must be non-negative")
    z = as_complex(points)
    d1, d2 = signed_distances(z, geo)
    tags = np.full(z.shape, MATRIX, dtype=object)
    tags[d2 < 0] = INCLUSION2
    tags[d1 < 0] = INCLUSION1
    tags[np.abs(d2) <= band] = INTERFACE2
    tags[np.abs(d1) <= band] = INTERFACE1
    return tags


def classify(p: PointLike, geo: DiskGeometry = UNIT_DISKS, band: float = DEFAULT_BAND) -> str:
    """Region tag of a single point."""
    return str(classify_many(_to_point(p), geo, band)[0])


def bulk_region_c(z: np.ndarray) -> np.ndarray:
    """
    Bulk region of canonical-geometry points, decided in the strip coordinate.

    Points on a circle go to the inclusion side; callers needing one-sided
    limits pass explicit hints instead.
    """
    s = np.real(1j / z)
    tags = np.full(z.shape, MATRIX, dtype=object)
    tags[s >= 0.5] = INCLUSION1
    tags[s <= -0.5] = INCLUSION2
    return tags


def fit_circle(p1: complex, p2: complex, p3: complex) -> Tuple[complex, float]:
    """Circumcircle (center, radius) through three points."""
    a = np.array([[2 * (p2.real - p1.real), 2 * (p2.imag - p1.imag)],
                  [2 * (p3.real - p1.real), 2 * (p3.imag - p1.imag)]])
    b = np.array([abs(p2) ** 2 - abs(p1) ** 2, abs(p3) ** 2 - abs(p1) ** 2])
    cx, cy = np.linalg.solve(a, b)
    c = complex(cx, cy)
    return c, float(abs(p1 - c))


def aspect_root(geo: DiskGeometry) -> float:
    """
    Larger root t of t + 1/t = Q with Q = 4 r1 r2 / |r2 - r1|.

    Reported alongside the map; the pole itself sits on the locus
    |z0|^2 = Q |Im z0| where the two image radii agree.
    """
    if geo.r1 == geo.r2:
        raise DomainError("aspect root is undefined for equal radii")
    q = 4.0 * geo.r1 * geo.r2 / abs(geo.r2 - geo.r1)
    return (q + np.sqrt(q * q - 4.0)) / 2.0


@dataclass(frozen=True)
class MobiusMap:
    """
    w = lam / (z - pole) + translation, or w = lam * z + translation when pole is None.

    The composed map sends the two original circles to |w - i| = 1 and
    |w + i| = 1 and the tangency point to the origin.
    """

    pole: Optional[complex]
    lam: complex
    translation: complex
    aspect: Optional[float] = None
    relabeled: bool = False
    locus_angle: float = 0.0

    @property
    def rotation(self) -> float:
        return float(np.angle(self.lam))

    @property
    def scale(self) -> float:
        return float(abs(self.lam))

    @property
    def is_identity(self) -> bool:
        return self.pole is None and self.lam == 1 and self.translation == 0

    def _guard(self, z: np.ndarray):
        if self.pole is not None and np.any(np.abs(z - self.pole) <= POLE_TOL):
            raise DomainError("Point coincides with the Mobius pole")

    def forward(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if self.pole is None:
            return self.lam * z + self.translation
        self._guard(z)
        return self.lam / (z - self.pole) + self.translation

    def inverse(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=complex)
        if self.pole is None:
            return (w - self.translation) / self.lam
        if np.any(np.abs(w - self.translation) <= POLE_TOL):
            raise DomainError("Point is the image of infinity")
        return self.pole + self.lam / (w - self.translation)

    def derivative(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if self.pole is None:
            return np.full(z.shape, self.lam, dtype=complex)
        self._guard(z)
        return -self.lam / (z - self.pole) ** 2

    def image_circle(self, center: complex, radius: float) -> Tuple[complex, float]:
        """Image circle of |z - center| = radius, fitted through three image points."""
        pts = center + radius * np.exp(1j * np.array([0.3, 2.2, 4.1]))
        img = self.forward(pts)
        return fit_circle(complex(img[0]), complex(img[1]), complex(img[2]))

    def to_dict(self) -> dict:
        return {
            'pole_x1': None if self.pole is None else float(self.pole.real),
            'pole_x2': None if self.pole is None else float(self.pole.imag),
            'rotation': self.rotation,
            'scale': self.scale,
            'translation_x1': float(np.real(self.translation)),
            'translation_x2': float(np.imag(self.translation)),
            'aspect_root': self.aspect,
            'relabeled': self.relabeled,
            'locus_angle': self.locus_angle,
        }


def locus_pole(geo: DiskGeometry, angle: float) -> complex:
    """
    Pole on the equal-radius locus, a circle through the tangency point.

    The images of both circles under 1/(z - pole) have equal radii exactly when
    |pole|^2 = Q |Im pole|, i.e. pole = +-i (Q/2)(1 + e^{i angle}); angle 0 is
    the point farthest from the origin.
    """
    if geo.r1 == geo.r2:
        raise DomainError("equal radii need no pole")
    q = 4.0 * geo.r1 * geo.r2 / abs(geo.r2 - geo.r1)
    sign = -1.0 if geo.r1 > geo.r2 else 1.0
    return complex(sign * 0.5j * q * (1.0 + np.exp(1j * angle)))


def equal_radius_map(
    geo: DiskGeometry,
    exclusion: Optional[Tuple[complex, float]] = None,
    angle_step: float = np.pi / 360.0
) -> MobiusMap:
    """
    Mobius reduction of two tangent disks with radii r1, r2 to the unit pair.

    The pole walks the equal-radius locus outward from angle 0 in alternating
    steps of angle_step; the first pole at distance >= 1 from the exclusion
    disk is used.

    Args:
        geo: Original disk geometry
        exclusion: (center, radius) of the bounded working region the pole
            must stay clear of; defaults to the smallest centered disk
            containing both inclusions
        angle_step: Spacing of the locus search

    Returns:
        MobiusMap normalizing the images to |w - i| = 1 and |w + i| = 1

    Raises:
        ConfigError: if no point of the locus clears the exclusion margin
    """
    if geo.r1 == geo.r2:
        return MobiusMap(pole=None, lam=1.0 / geo.r1, translation=0.0)

    relabeled = geo.r1 > geo.r2
    if exclusion is None:
        exclusion = (0.0, 2.0 * max(geo.r1, geo.r2))
    ex_center, ex_radius = exclusion

    n_steps = int(np.ceil(np.pi / angle_step))
    angles = [0.0] + [s * k * angle_step for k in range(1, n_steps) for s in (1.0, -1.0)]
    for angle in angles:
        pole = locus_pole(geo, angle)
        if abs(pole - ex_center) >= ex_radius + 1.0:
            break
    else:
        raise ConfigError(
            f"No pole on the equal-radius locus stays at distance 1 from the working region "
            f"(center {ex_center}, radius {ex_radius})"
        )

    def bare_image(c: complex, r: float) -> Tuple[complex, float]:
        d = abs(c - pole) ** 2 - r * r
        return np.conj(c - pole) / d, r / abs(d)

    c1, rad1 = bare_image(geo.center1, geo.r1)
    c2, rad2 = bare_image(geo.center2, geo.r2)
    tangency = -1.0 / pole
    lam = 1j / (c1 - tangency)
    translation = -lam * tangency
    logger.debug("equal-radius map: pole=%s (angle %.4f) image radii %.17g %.17g", pole, angle, rad1, rad2)
    return MobiusMap(
        pole=complex(pole),
        lam=complex(lam),
        translation=complex(translation),
        aspect=float(aspect_root(geo)),
        relabeled=relabeled,
        locus_angle=float(angle),
    )
