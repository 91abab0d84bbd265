"""Classical configuration space of the large-S Rydberg chain.

Code units throughout: ``2J = 1``, ``|S_i| = 1``, time ``tau = 2 J S^2 t``
and energy in units of ``2 J S^3``.  The spin size only enters through the
fluctuation scale ``eps = 1/sqrt(S)``.

Spherical convention: ``S = (sin th cos ph, sin th sin ph, cos th)``; an
excited (Rydberg) atom is ``(0, 0, +1)``, a ground-state atom ``(0, 0, -1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NORM_TOL = 1e-12


def _as_spin_array(spins) -> np.ndarray:
    if isinstance(spins, (SpinChain, UnitCell)):
        return spins.spins
    arr = np.asarray(spins, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected an (N, 3) array of spins, got shape {arr.shape}")
    return arr


def _frozen_unit_rows(spins, min_sites: int) -> np.ndarray:
    arr = np.array(spins, dtype=float, copy=True)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected an (N, 3) array of spins, got shape {arr.shape}")
    if arr.shape[0] < min_sites:
        raise ValueError(f"need at least {min_sites} sites, got {arr.shape[0]}")
    norms = np.linalg.norm(arr, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise ValueError("spins must be unit vectors (renormalize first)")
    arr /= norms[:, None]
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SpinChain:
    """N >= 3 classical unit spins on a ring (site ``i + N`` is site ``i``)."""

    spins: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "spins", _frozen_unit_rows(self.spins, 3))

    @property
    def N(self) -> int:
        return self.spins.shape[0]

    def __len__(self):
        return self.N

    def __eq__(self, other):
        if not isinstance(other, SpinChain):
            return NotImplemented
        return self.spins.shape == other.spins.shape and np.array_equal(self.spins, other.spins)

    def allclose(self, other, atol=1e-12) -> bool:
        other = _as_spin_array(other)
        return self.spins.shape == other.shape and np.allclose(self.spins, other, atol=atol, rtol=0)


@dataclass(frozen=True, eq=False)
class UnitCell:
    """``n`` inequivalent spins standing for the infinite chain ``S[n*j + l] = cell[l]``."""

    spins: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "spins", _frozen_unit_rows(self.spins, 1))

    @property
    def n(self) -> int:
        return self.spins.shape[0]

    def tile(self, N: int) -> SpinChain:
        if N % self.n:
            raise ValueError(f"N={N} is not a multiple of the cell size {self.n}")
        return SpinChain(np.tile(self.spins, (N // self.n, 1)))

    def __eq__(self, other):
        if not isinstance(other, UnitCell):
            return NotImplemented
        return self.spins.shape == other.spins.shape and np.array_equal(self.spins, other.spins)


@dataclass(frozen=True)
class SigmaCoords:
    """Polar angles of the even spin where a two-site orbit pierces the echo manifold."""

    theta_e: float
    phi_e: float

    def __post_init__(self):
        if not (0.0 <= self.theta_e <= math.pi):
            raise ValueError(f"theta_e must lie in [0, pi], got {self.theta_e}")
        object.__setattr__(self, "phi_e", float(self.phi_e) % (2.0 * math.pi))
        object.__setattr__(self, "theta_e", float(self.theta_e))


def unit_vector(theta: float, phi: float) -> np.ndarray:
    st = math.sin(theta)
    return np.array([st * math.cos(phi), st * math.sin(phi), math.cos(theta)])


def angles(v) -> tuple[float, float]:
    """Inverse of :func:`unit_vector`, ``phi`` in ``[0, 2 pi)``."""
    x, y, z = (float(c) for c in v)
    theta = math.acos(max(-1.0, min(1.0, z)))
    phi = math.atan2(y, x) % (2.0 * math.pi)
    return theta, phi


def normalize(spins) -> np.ndarray:
    arr = np.array(_as_spin_array(spins), dtype=float, copy=True)
    arr /= np.linalg.norm(arr, axis=1)[:, None]
    return arr


def energy(chain) -> float:
    """``E = sum_i (1 - z_{i-1}) x_i (1 - z_{i+1})`` with periodic closure.

    For a :class:`UnitCell` this is the energy per unit cell.
    """
    S = _as_spin_array(chain)
    w = 1.0 - S[:, 2]
    return float(np.sum(np.roll(w, 1) * S[:, 0] * np.roll(w, -1)))


def local_fields(chain) -> np.ndarray:
    """``h_i = -dE/dS_i`` for every site, shape ``(N, 3)``."""
    S = _as_spin_array(chain)
    x = S[:, 0]
    w = 1.0 - S[:, 2]
    h = np.zeros_like(S)
    h[:, 0] = -np.roll(w, 1) * np.roll(w, -1)
    h[:, 2] = np.roll(x, 1) * np.roll(w, 2) + np.roll(x, -1) * np.roll(w, -2)
    return h


def local_field(chain, i: int) -> np.ndarray:
    S = _as_spin_array(chain)
    N = S.shape[0]
    if not 0 <= i < N:
        raise IndexError(f"site {i} out of range for N={N}")
    x = S[:, 0]
    w = 1.0 - S[:, 2]
    hx = -w[(i - 1) % N] * w[(i + 1) % N]
    hz = x[(i - 1) % N] * w[(i - 2) % N] + x[(i + 1) % N] * w[(i + 2) % N]
    return np.array([hx, 0.0, hz])


def eom_rhs(chain) -> np.ndarray:
    """Precession ``dS_i/dtau = h_i x S_i``."""
    S = _as_spin_array(chain)
    return np.cross(local_fields(S), S)


def rz_pi(v) -> np.ndarray:
    """Rotate vectors by pi about z: ``(x, y, z) -> (-x, -y, z)``."""
    out = np.array(v, dtype=float, copy=True)
    out[..., 0] *= -1.0
    out[..., 1] *= -1.0
    return out


def _rewrap(template, spins):
    if isinstance(template, SpinChain):
        return SpinChain(spins)
    if isinstance(template, UnitCell):
        return UnitCell(spins)
    return spins


def apply_rz_pi(chain):
    """Particle-hole-like symmetry; flips the sign of the energy."""
    return _rewrap(chain, rz_pi(_as_spin_array(chain)))


def translate(chain, m: int):
    """Cyclic shift: site ``i`` of the result holds old site ``i - m``."""
    return _rewrap(chain, np.roll(_as_spin_array(chain), m, axis=0))


def echo_conjugate(chain):
    """Echo map ``T R_z``: one-site translation combined with the pi rotation."""
    return _rewrap(chain, rz_pi(np.roll(_as_spin_array(chain), 1, axis=0)))


def zn_state(n: int, N: int) -> SpinChain:
    """Density wave with site ``i`` excited iff ``i % n == 0``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if N % n:
        raise ValueError(f"N={N} is not divisible by n={n}")
    S = np.zeros((N, 3))
    S[:, 2] = -1.0
    S[::n, 2] = 1.0
    return SpinChain(S)


def zn_cell(n: int) -> UnitCell:
    S = np.zeros((n, 3))
    S[:, 2] = -1.0
    S[0, 2] = 1.0
    return UnitCell(S)


def theta_to_spins(thetas) -> np.ndarray:
    """Embed x = 0 sector angles as ``S = (0, sin th, cos th)``."""
    th = np.asarray(thetas, dtype=float)
    return np.stack([np.zeros_like(th), np.sin(th), np.cos(th)], axis=-1)


def spins_to_theta(spins) -> np.ndarray:
    S = _as_spin_array(spins)
    return np.arctan2(S[:, 1], S[:, 2])


def sigma_point(c: SigmaCoords) -> UnitCell:
    """Two-site cell on the echo manifold: ``S_o = R_z(pi) S_e``."""
    se = unit_vector(c.theta_e, c.phi_e)
    return UnitCell(np.stack([se, rz_pi(se)]))


def sigma_coords(cell) -> SigmaCoords:
    th, ph = angles(_as_spin_array(cell)[0])
    return SigmaCoords(th, ph)


def sigma_distance(cell) -> float:
    """``|S_o - R_z(pi) S_e|^2``; zero exactly on the echo manifold."""
    S = _as_spin_array(cell)
    if S.shape[0] != 2:
        raise ValueError(f"sigma_distance needs a two-site cell, got n={S.shape[0]}")
    d = S[1] - rz_pi(S[0])
    return float(d @ d)
