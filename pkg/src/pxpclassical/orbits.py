"""Periodic orbits: Sigma-rooted two-site orbits, the x = 0 sector and quadrature oracles."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .dynamics import (
    DEFAULT_SETTINGS, CrossingNotFound, IntegrationError, IntegratorSettings, Trajectory,
    evolve, find_sigma_return, integrate, integrate_theta,
)
from .spin import (
    SigmaCoords, UnitCell, _as_spin_array, energy, eom_rhs, sigma_coords as _sigma_coords_of,
    sigma_point, theta_to_spins,
)

DEFAULT_HORIZON = 50.0
CLOSURE_TOL = 1e-8


class DegenerateOrbitError(ValueError):
    """Sigma point is a fixed point of the flow (both spins along z)."""


class OrbitNotFound(LookupError):
    """The trajectory did not return to the echo manifold within the horizon."""


@dataclass
class PeriodicOrbit:
    n: int
    cell0: UnitCell
    period: float
    sigma_coords: SigmaCoords | None = None
    samples: Trajectory | None = field(default=None, repr=False)
    closure_residual: float = math.nan

    @property
    def period_T(self) -> float:
        return self.period

    @property
    def frequency(self) -> float:
        return 2.0 * math.pi / self.period


# ---------------------------------------------------------------------------
# x = 0 sector oracles


def first_integral(theta):
    """``G(th) = 3/2 th - 2 sin th + 1/4 sin 2th``, the antiderivative of ``(1 - cos th)^2``."""
    return 1.5 * theta - 2.0 * np.sin(theta) + 0.25 * np.sin(2.0 * theta)


def _invert_G(value, lo, hi):
    return brentq(lambda t: first_integral(t) - value, lo, hi, xtol=1e-15, rtol=1e-15)


def z2_sigma_crossing() -> float:
    """Polar angle ``th*`` of the even spin where the Z2 orbit crosses Sigma: ``2 G(th*) = 3 pi / 2``."""
    return _invert_G(0.75 * math.pi, 0.0, math.pi)


def z2_period_quadrature() -> float:
    """Z2 period from the first integral ``G(th_e) - G(th_o) = 3 pi / 2`` by quadrature.

    Over one period ``th_o`` runs from 0 to 2 pi and ``th_e`` from pi to 3 pi.
    ``dt = dth_o / (1 - cos th_e)^2`` has an integrable singularity where
    ``th_e = 2 pi``; around it the time is integrated in ``th_e`` instead.
    """
    c = 1.5 * math.pi
    w = lambda t: (1.0 - math.cos(t)) ** 2  # noqa: E731

    def te_of(to):
        return _invert_G(first_integral(to) + c, 0.0, 4.0 * math.pi)

    def to_of(te):
        return _invert_G(first_integral(te) - c, -2.0 * math.pi, 4.0 * math.pi)

    a, b = 0.5 * math.pi, 1.5 * math.pi
    kw = dict(epsabs=1e-14, epsrel=1e-13, limit=200)
    t1 = quad(lambda to: 1.0 / w(te_of(to)), 0.0, a, **kw)[0]
    t2 = quad(lambda te: 1.0 / w(to_of(te)), te_of(a), te_of(b), **kw)[0]
    t3 = quad(lambda to: 1.0 / w(te_of(to)), b, 2.0 * math.pi, **kw)[0]
    return t1 + t2 + t3


def theta_invariants(thetas, pairs):
    """``th_i - sin th_i - th_j + sin th_j`` for each ``(i, j)`` in ``pairs``.

    Sites are labelled 1..n as in ``theta_1 .. theta_n``.  Conserved for n = 3.
    """
    th = np.asarray(thetas, dtype=float)
    q = th - np.sin(th)
    return np.array([q[..., i - 1] - q[..., j - 1] for i, j in pairs]).T


def theta_orbit_period(thetas, settings: IntegratorSettings = DEFAULT_SETTINGS,
                       site: int = 0, horizon: float = DEFAULT_HORIZON) -> float:
    """Time for ``th_site`` to advance by 2 pi (angles never decrease in this sector)."""
    th0 = np.asarray(thetas, dtype=float)
    dt = 0.05
    grid = np.arange(0.0, horizon + dt, dt)
    traj = integrate_theta(th0, t_eval=grid, settings=settings)
    adv = traj.states[:, site] - th0[site] - 2.0 * math.pi
    idx = np.nonzero(adv >= 0)[0]
    if idx.size == 0:
        raise OrbitNotFound(f"site {site} did not complete a turn within {horizon}")
    j = idx[0]
    base = traj.states[j - 1]
    t_base = grid[j - 1]

    def f(t):
        if t <= t_base:
            return base[site] - th0[site] - 2.0 * math.pi
        y = integrate_theta(base, t_eval=[0.0, t - t_base], settings=settings).states[-1]
        return y[site] - th0[site] - 2.0 * math.pi

    return brentq(f, t_base, grid[j], xtol=1e-14, rtol=4 * np.finfo(float).eps)


def theta_orbit(thetas, settings: IntegratorSettings = DEFAULT_SETTINGS,
                n_samples: int = 201) -> PeriodicOrbit:
    """Closed orbit of the x = 0 sector through ``thetas`` (n = 2 or 3 close generically)."""
    th0 = np.asarray(thetas, dtype=float)
    T = theta_orbit_period(th0, settings)
    cell = UnitCell(theta_to_spins(th0))
    samples = integrate(cell, T, settings, n_samples=n_samples)
    res = float(np.max(np.abs(samples.states[-1] - samples.states[0])))
    return PeriodicOrbit(th0.size, cell, T, None, samples, res)


# ---------------------------------------------------------------------------
# Sigma-rooted two-site orbits


def find_orbit_from_sigma(c: SigmaCoords, settings: IntegratorSettings = DEFAULT_SETTINGS,
                          horizon: float = DEFAULT_HORIZON, n_samples: int = 201
                          ) -> PeriodicOrbit:
    """Closed two-site orbit through the echo-manifold point ``c``.

    ``T`` is twice the first return time to Sigma.
    """
    cell = sigma_point(c)
    if np.max(np.abs(eom_rhs(cell.spins))) < 1e-12:
        raise DegenerateOrbitError(f"{c} is a fixed point of the flow; period undefined")
    try:
        crossing = find_sigma_return(cell, 0.5 * horizon, settings)
    except CrossingNotFound as exc:
        raise OrbitNotFound(str(exc)) from exc
    T = 2.0 * crossing.t
    samples = integrate(cell, T, settings, n_samples=n_samples)
    res = float(np.max(np.abs(samples.states[-1] - samples.states[0])))
    return PeriodicOrbit(2, cell, T, c, samples, res)


def z2_orbit(settings: IntegratorSettings = DEFAULT_SETTINGS) -> PeriodicOrbit:
    return find_orbit_from_sigma(SigmaCoords(z2_sigma_crossing(), 0.5 * math.pi), settings)


def partner_crossing(c: SigmaCoords, settings: IntegratorSettings = DEFAULT_SETTINGS,
                     horizon: float = DEFAULT_HORIZON) -> SigmaCoords:
    """Second Sigma crossing of the orbit through ``c``, shifted by one site.

    Near the Z2 orbit this is the involution ``Delta -> -Delta + O(Delta^2)``
    on orbit space: both points label the same orbit.
    """
    crossing = find_sigma_return(sigma_point(c), 0.5 * horizon, settings)
    S = np.asarray(getattr(crossing.cell, "spins", crossing.cell))
    p = _sigma_coords_of(S[::-1])
    # keep phi on the branch nearest the input
    dphi = (p.phi_e - c.phi_e + math.pi) % (2 * math.pi) - math.pi
    return SigmaCoords(p.theta_e, c.phi_e + dphi)


def closure_residual(orbit: PeriodicOrbit, settings: IntegratorSettings | None = None) -> float:
    """``|S(T) - S(0)|_inf`` from a fresh integration at 100x tighter tolerance."""
    settings = settings or DEFAULT_SETTINGS.tightened(100.0)
    S0 = orbit.cell0.spins
    return float(np.max(np.abs(evolve(S0, orbit.period, settings) - S0)))


def recurrence_distance(state, horizon: float = DEFAULT_HORIZON, t_min: float | None = None,
                        settings: IntegratorSettings = DEFAULT_SETTINGS, dt: float = 0.01
                        ) -> float:
    """``min_t |S(t) - S(0)|_inf`` over ``t`` in ``[t_min, horizon]``."""
    if t_min is None:
        t_min = 0.5 * z2_period_quadrature()
    S0 = np.asarray(_as_spin_array(state), dtype=float)
    grid = np.arange(0.0, horizon + 0.5 * dt, dt)
    traj = integrate(S0, t_eval=grid, settings=settings)
    d = np.max(np.abs(traj.states - S0[None]), axis=(1, 2))
    return float(np.min(d[grid >= t_min]))


# ---------------------------------------------------------------------------
# family scans


@dataclass
class OrbitRow:
    theta_e: float
    phi_e: float
    period: float
    stable: bool | None
    max_abs_quarter_trace: float
    boundary_type: str
    status: str
    i: int = 0
    j: int = 0


@dataclass
class OrbitFamilyTable:
    rows: list
    n_theta: int
    n_phi: int

    def array(self, attr: str) -> np.ndarray:
        out = np.full((self.n_theta, self.n_phi), np.nan)
        for r in self.rows:
            v = getattr(r, attr)
            out[r.i, r.j] = np.nan if v is None else float(v)
        return out

    def thetas(self):
        return np.array([self.rows[i * self.n_phi].theta_e for i in range(self.n_theta)])

    def phis(self):
        return np.array([self.rows[j].phi_e for j in range(self.n_phi)])


def sigma_grid(n_theta: int = 200, n_phi: int = 200):
    """Cell-centred theta in (0, pi) and phi in [0, 2 pi)."""
    if n_theta < 2 or n_phi < 2:
        raise ValueError("need at least 2 grid points per axis")
    thetas = (np.arange(n_theta) + 0.5) * math.pi / n_theta
    phis = np.arange(n_phi) * 2.0 * math.pi / n_phi
    return thetas, phis


def _scan_point(args):
    from .stability import classify_orbit

    i, j, th, ph, settings, n_k, horizon = args
    try:
        orbit = find_orbit_from_sigma(SigmaCoords(th, ph), settings, horizon, n_samples=2)
    except DegenerateOrbitError:
        return OrbitRow(th, ph, math.nan, None, math.nan, "none", "degenerate", i, j)
    except (OrbitNotFound, IntegrationError) as exc:
        status = "no-return" if isinstance(exc, OrbitNotFound) else "integration-failure"
        return OrbitRow(th, ph, math.nan, None, math.nan, "none", status, i, j)
    status = "ok" if orbit.closure_residual < CLOSURE_TOL else "closure-failed"
    try:
        verdict = classify_orbit(orbit, n_k, settings, refine=False)
    except IntegrationError:
        return OrbitRow(th, ph, orbit.period, None, math.nan, "none", "integration-failure", i, j)
    return OrbitRow(th, ph, orbit.period, verdict.stable, verdict.max_abs_quarter_trace,
                    verdict.boundary_type, status, i, j)


def orbit_family_scan(thetas=None, phis=None, settings: IntegratorSettings = DEFAULT_SETTINGS,
                      n_k: int = 256, workers: int = 1, horizon: float = DEFAULT_HORIZON,
                      progress=None) -> OrbitFamilyTable:
    """Period and linear stability of the two-site orbits over a (theta_e, phi_e) grid.

    Rows are ordered by grid index whatever the worker count; failed points
    are kept with a status string.
    """
    if thetas is None or phis is None:
        dt_, dp_ = sigma_grid()
        thetas = dt_ if thetas is None else thetas
        phis = dp_ if phis is None else phis
    thetas = np.asarray(thetas, dtype=float)
    phis = np.asarray(phis, dtype=float)
    tasks = [(i, j, float(th), float(ph), settings, n_k, horizon)
             for i, th in enumerate(thetas) for j, ph in enumerate(phis)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_scan_point, tasks))
    else:
        rows = []
        for t in tasks:
            rows.append(_scan_point(t))
            if progress is not None:
                progress(len(rows), len(tasks))
    return OrbitFamilyTable(rows, len(thetas), len(phis))


def orbit_energy_residual(orbit: PeriodicOrbit) -> float:
    return float(max(abs(energy(S)) for S in orbit.samples.states))
