"""Classical large-S dynamics of the Rydberg (PXP) chain: periodic orbits, their
Bloch-resolved linear stability and the growth of semiclassical fluctuations."""

from ._accel import BACKEND, HAVE_NUMBA
from .dynamics import DEFAULT_SETTINGS, IntegrationError, IntegratorSettings, integrate
from .orbits import PeriodicOrbit, find_orbit_from_sigma, z2_orbit, z2_period_quadrature
from .spin import SigmaCoords, SpinChain, UnitCell, energy, sigma_point, zn_cell, zn_state

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "HAVE_NUMBA", "DEFAULT_SETTINGS", "IntegrationError", "IntegratorSettings",
    "integrate", "PeriodicOrbit", "find_orbit_from_sigma", "z2_orbit", "z2_period_quadrature",
    "SigmaCoords", "SpinChain", "UnitCell", "energy", "sigma_point", "zn_cell", "zn_state",
]
