"""
Shared fixtures: standard media and seeded point samplers.
"""

import numpy as np
import pytest

from geometry.maps import classify_many
from models.medium import BULK_REGIONS, MediumParams, TruncationPolicy


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: expensive oracle runs (h = 1/256 and beyond)')


@pytest.fixture
def zero_medium():
    return MediumParams(a0=1.0, b0=1.0, R0=3.0)


@pytest.fixture
def symmetric_medium():
    return MediumParams(a0=5.0, b0=5.0, R0=3.0)


@pytest.fixture
def mixed_medium():
    return MediumParams(a0=5.0, b0=0.5, R0=3.0)


@pytest.fixture
def soft_hard_medium():
    return MediumParams(a0=0.2, b0=3.0, R0=3.0)


@pytest.fixture(params=[(5.0, 5.0), (5.0, 0.5), (0.2, 3.0)], ids=['sym', 'mixed', 'soft-hard'])
def medium(request):
    a0, b0 = request.param
    return MediumParams(a0=a0, b0=b0, R0=3.0)


@pytest.fixture
def trunc():
    return TruncationPolicy(tail_tol=1e-13)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def bulk_points(rng):
    """Sampler of points inside B_R, at least `margin` away from both circles and the cusp."""

    def sample(n: int, R: float = 2.5, margin: float = 0.05, region=None):
        out = []
        while len(out) < n:
            z = complex(rng.uniform(-R, R), rng.uniform(-R, R))
            if abs(z) >= R or abs(z) < margin:
                continue
            if abs(abs(z - 1j) - 1.0) < margin or abs(abs(z + 1j) - 1.0) < margin:
                continue
            tag = classify_many(np.array([z]))[0]
            if tag not in BULK_REGIONS or (region is not None and tag != region):
                continue
            out.append(z)
        return np.array(out)

    return sample
