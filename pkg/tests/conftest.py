import math

import pytest

from pxpclassical.dynamics import DEFAULT_SETTINGS
from pxpclassical.orbits import find_orbit_from_sigma, z2_orbit
from pxpclassical.spin import SigmaCoords

STABLE = SigmaCoords(2.2, 1.57)
UNSTABLE_PLUS = SigmaCoords(2.0, 1.2)
UNSTABLE_MINUS = SigmaCoords(0.5 * math.pi, 0.5 * math.pi)


@pytest.fixture(scope="session")
def z2():
    return z2_orbit(DEFAULT_SETTINGS)


@pytest.fixture(scope="session")
def stable_orbit():
    return find_orbit_from_sigma(STABLE)


@pytest.fixture(scope="session")
def unstable_orbit():
    return find_orbit_from_sigma(UNSTABLE_PLUS)


@pytest.fixture(scope="session")
def unstable_minus_orbit():
    return find_orbit_from_sigma(UNSTABLE_MINUS)
