"""Time integration of chains, unit cells, the x = 0 sector and tangent vectors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import kernels
from .spin import (
    UnitCell, _as_spin_array, echo_conjugate, energy, eom_rhs, rz_pi,
    sigma_distance,
)

# Sampling step used when scanning for echo-manifold returns (<= T_Z2 / 200).
SIGMA_SCAN_DT = 0.01
SIGMA_TOL = 1e-10

_STATUS_TEXT = {
    kernels.STATUS_OK: "ok",
    kernels.STATUS_STEP_UNDERFLOW: "step-size underflow",
    kernels.STATUS_MAX_STEPS: "maximum number of steps exceeded",
    kernels.STATUS_NONFINITE: "non-finite state",
}


class IntegrationError(RuntimeError):
    """Raised when the adaptive integrator cannot reach the requested time.

    ``t`` and ``state`` hold the last accepted point.
    """

    def __init__(self, status, t, state):
        self.status = status
        self.t = t
        self.state = state
        super().__init__(f"integration failed at t={t:.6g}: {_STATUS_TEXT.get(status, status)}")


class CrossingNotFound(LookupError):
    """No return to the echo manifold inside the searched window."""


@dataclass(frozen=True)
class IntegratorSettings:
    rtol: float = 1e-10
    atol: float = 1e-12
    max_step: float = 0.5
    renormalize_every: int = 1
    max_steps: int = 50_000_000

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")
        if self.renormalize_every < 0:
            raise ValueError("renormalize_every must be >= 0 (0 disables)")

    def tightened(self, factor=100.0) -> "IntegratorSettings":
        return IntegratorSettings(self.rtol / factor, self.atol / factor, self.max_step,
                                  self.renormalize_every, self.max_steps)


DEFAULT_SETTINGS = IntegratorSettings()


@dataclass
class Trajectory:
    """Sampled solution. ``states`` is ``(nt, n, 3)`` for spins or ``(nt, n)`` for angles."""

    times: np.ndarray
    states: np.ndarray
    kind: str  # "chain", "cell" or "theta"
    dense: bool = True
    n_steps: int = 0
    renorm_total: float = 0.0
    settings: IntegratorSettings = field(default=DEFAULT_SETTINGS)

    def energies(self) -> np.ndarray:
        if self.kind == "theta":
            from .spin import theta_to_spins
            return np.array([energy(theta_to_spins(th)) for th in self.states])
        return np.array([energy(S) for S in self.states])

    def energy_drift(self) -> float:
        e = self.energies()
        return float(np.max(np.abs(e - e[0])))

    def norm_error(self) -> float:
        if self.kind == "theta":
            return 0.0
        return float(np.max(np.abs(np.linalg.norm(self.states, axis=2) - 1.0)))


def _time_grid(t_end, t_eval, n_samples):
    if t_eval is not None:
        te = np.asarray(t_eval, dtype=float)
        if te.ndim != 1 or te.size == 0 or np.any(np.diff(te) <= 0) or te[0] < 0:
            raise ValueError("t_eval must be a strictly increasing sequence of times >= 0")
        return te
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    return np.linspace(0.0, t_end, n_samples)


def _run(kind, y0, times, iparams, fparams, settings, tdir=1.0):
    solver = kernels.solve
    Y, status, nacc, t_last, y_last, renorm_total, _ = solver(
        kind, np.ascontiguousarray(y0, dtype=float), 0.0, times,
        np.asarray(iparams, dtype=np.int64), np.asarray(fparams, dtype=float),
        float(settings.rtol), float(settings.atol), float(settings.max_step), 0.0,
        int(settings.max_steps), float(tdir), int(settings.renormalize_every))
    if status != kernels.STATUS_OK:
        raise IntegrationError(status, t_last, y_last)
    return Y, nacc, renorm_total


def integrate(state, t_end=None, settings: IntegratorSettings = DEFAULT_SETTINGS, *,
              t_eval=None, n_samples=201, backward=False) -> Trajectory:
    """Integrate ``dS_i/dtau = h_i x S_i`` for a chain or an n-site unit cell.

    A unit cell is evolved as a ring of ``n`` sites, which is exact because
    spatial periodicity is conserved.  With ``backward=True`` the samples are
    ``S(-t)`` for the requested ``t >= 0``.
    """
    S = _as_spin_array(state)
    n = S.shape[0]
    times = _time_grid(t_end, t_eval, n_samples)
    Y, nacc, rn = _run(kernels.KIND_CHAIN, S.ravel(), times, [n, 0, 0], [], settings,
                       -1.0 if backward else 1.0)
    kind = "cell" if isinstance(state, UnitCell) or n < 3 else "chain"
    return Trajectory(times, Y.reshape(len(times), n, 3), kind, True, nacc, rn, settings)


def evolve(state, t, settings: IntegratorSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """Final state after time ``t`` (may be negative)."""
    S = _as_spin_array(state)
    if t == 0:
        return np.array(S, dtype=float)
    Y, _, _ = _run(kernels.KIND_CHAIN, S.ravel(), np.array([abs(t)]), [S.shape[0], 0, 0], [],
                   settings, 1.0 if t > 0 else -1.0)
    return Y[-1].reshape(S.shape)


def theta_rhs(thetas) -> np.ndarray:
    w = 1.0 - np.cos(np.asarray(thetas, dtype=float))
    return np.roll(w, 1) * np.roll(w, -1)


def integrate_theta(thetas, t_end=None, settings: IntegratorSettings = DEFAULT_SETTINGS, *,
                    t_eval=None, n_samples=201) -> Trajectory:
    """x = 0 sector: ``dth_i/dtau = (1 - cos th_{i-1})(1 - cos th_{i+1})``."""
    th = np.asarray(thetas, dtype=float)
    times = _time_grid(t_end, t_eval, n_samples)
    Y, nacc, _ = _run(kernels.KIND_THETA, th, times, [th.size, 0, 0], [], settings)
    return Trajectory(times, Y, "theta", True, nacc, 0.0, settings)


# ---------------------------------------------------------------------------
# tangent dynamics


def tangent_frame(spins):
    """Orthonormal ``(e1, e2)`` spanning the plane normal to each spin.

    ``e1`` is along ``z x S`` (or ``x`` for spins parallel to z), ``e2 = S x e1``.
    """
    S = _as_spin_array(spins)
    e1 = np.cross(np.array([0.0, 0.0, 1.0]), S)
    nrm = np.linalg.norm(e1, axis=1)
    polar = nrm < 1e-8
    e1[polar] = np.array([1.0, 0.0, 0.0])
    nrm[polar] = 1.0
    e1 /= nrm[:, None]
    e1 -= np.sum(e1 * S, axis=1)[:, None] * S
    e1 /= np.linalg.norm(e1, axis=1)[:, None]
    e2 = np.cross(S, e1)
    return e1, e2


def propagate_tangent(spins, ks, vectors, t_end, settings: IntegratorSettings = DEFAULT_SETTINGS):
    """Propagate Bloch tangent vectors along the trajectory of a unit cell.

    ``vectors`` has shape ``(nk, m, n, 3)`` (complex): ``m`` vectors for each of
    the ``nk`` wavevectors ``ks``; the deviation on site ``n*j + l`` is
    ``vectors[q, a, l] * exp(i * ks[q] * n * j)``.  Returns ``(S(T), D(T))``.
    """
    S = np.asarray(_as_spin_array(spins), dtype=float)
    n = S.shape[0]
    ks = np.atleast_1d(np.asarray(ks, dtype=float))
    D = np.asarray(vectors, dtype=complex)
    nk, m = D.shape[0], D.shape[1]
    if D.shape != (nk, m, n, 3) or nk != ks.size:
        raise ValueError(f"vectors must have shape ({ks.size}, m, {n}, 3), got {D.shape}")
    y0 = np.concatenate([S.ravel(), D.real.ravel(), D.imag.ravel()])
    Y, _, _ = _run(kernels.KIND_TANGENT, y0, np.array([float(t_end)]), [n, nk, m], ks, settings)
    y = Y[-1]
    nt = nk * m * n * 3
    ST = y[: 3 * n].reshape(n, 3)
    DT = (y[3 * n: 3 * n + nt] + 1j * y[3 * n + nt:]).reshape(nk, m, n, 3)
    return ST, DT


def integrate_tangent(orbit, k, initial, settings: IntegratorSettings = DEFAULT_SETTINGS):
    """Propagate tangent vectors at wavevector ``k`` over one period of ``orbit``.

    ``initial`` is ``(m, n, 3)`` complex (or a single ``(n, 3)`` vector).
    """
    n = orbit.n
    if not (-math.pi / n < k <= math.pi / n + 1e-15):
        raise ValueError(f"k={k} outside the reduced zone (-pi/{n}, pi/{n}]")
    D = np.asarray(initial, dtype=complex)
    single = D.ndim == 2
    if single:
        D = D[None]
    _, DT = propagate_tangent(orbit.cell0.spins, [k], D[None], orbit.period, settings)
    return DT[0, 0] if single else DT[0]


def symplectic_pairing(spins, d1, d2) -> complex:
    """``sum_i (S_i x d1_i) . d2_i`` - conserved by the linearized flow."""
    S = _as_spin_array(spins)
    return complex(np.sum(np.cross(S, d1) * d2))


# ---------------------------------------------------------------------------
# echo manifold


@dataclass(frozen=True)
class SigmaCrossing:
    t: float
    cell: UnitCell
    distance: float


def _sigma_dist_rate(S):
    """``d(t)`` and ``d'(t)`` for a two-site cell state."""
    v = eom_rhs(S)
    diff = S[1] - rz_pi(S[0])
    ddiff = v[1] - rz_pi(v[0])
    return float(diff @ diff), float(2.0 * diff @ ddiff)


def detect_sigma_crossing(traj: Trajectory, from_t: float = 0.0, tol: float = SIGMA_TOL,
                          settings: IntegratorSettings | None = None) -> SigmaCrossing:
    """First return to the echo manifold after ``from_t``.

    Local minima of the sampled ``sigma_distance`` are refined by root-finding
    on its time derivative, integrating from the preceding sample.  Raises
    :class:`CrossingNotFound` if no minimum drops below ``tol``.
    """
    if traj.kind == "theta" or traj.states.shape[1] != 2:
        raise ValueError("detect_sigma_crossing needs a trajectory of two-site cells")
    settings = settings or traj.settings
    t = traj.times
    d = np.array([sigma_distance(S) for S in traj.states])
    for j in range(1, len(t) - 1):
        if t[j] <= from_t or not (d[j] <= d[j - 1] and d[j] <= d[j + 1]):
            continue
        # a genuine crossing touches zero quadratically; skip far-away minima
        if d[j] > 0.25:
            continue
        base_t, base_S = t[j - 1], traj.states[j - 1]

        def state_at(tt, _b=base_S, _t=base_t):
            return evolve(_b, tt - _t, settings) if tt > _t else np.array(_b)

        def rate(tt):
            return _sigma_dist_rate(state_at(tt))[1]

        lo, hi = t[j - 1], t[j + 1]
        rlo, rhi = rate(lo), rate(hi)
        if rlo > 0 or rhi < 0:
            ts = t[j]
        elif rlo == 0:
            ts = lo
        elif rhi == 0:
            ts = hi
        else:
            ts = brentq(rate, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        S = state_at(ts)
        dist = sigma_distance(S)
        if dist < tol:
            return SigmaCrossing(float(ts), UnitCell(S / np.linalg.norm(S, axis=1)[:, None]),
                                 dist)
    raise CrossingNotFound(f"no echo-manifold return in ({from_t}, {t[-1]}] below {tol:g}")


def find_sigma_return(cell0, horizon: float, settings: IntegratorSettings = DEFAULT_SETTINGS,
                      dt: float = SIGMA_SCAN_DT, tol: float = SIGMA_TOL,
                      chunk: float = 4.0) -> SigmaCrossing:
    """Integrate a two-site cell and return its first echo-manifold crossing at ``t > 0``."""
    S = np.array(_as_spin_array(cell0), dtype=float)
    t0 = 0.0
    n_per_chunk = max(3, int(round(chunk / dt)))
    while True:
        grid = dt * np.arange(n_per_chunk + 1)
        traj = integrate(S, t_eval=grid, settings=settings)
        traj.times = traj.times + t0
        try:
            return detect_sigma_crossing(traj, from_t=t0, tol=tol, settings=settings)
        except CrossingNotFound:
            pass
        # restart one sample early so a minimum on the seam is still bracketed
        S, t0 = traj.states[-2], traj.times[-2]
        if t0 >= horizon:
            raise CrossingNotFound(f"no echo-manifold return within horizon {horizon}")


def echo_check(cell0, T: float, settings: IntegratorSettings = DEFAULT_SETTINGS,
               n_samples: int = 101, tol: float = 1e-8) -> float:
    """Largest deviation ``|S(t0+t) - C S(t0-t)|_inf`` for ``t`` in ``[0, T]``.

    ``C`` is the one-site translation combined with the pi rotation about z.
    """
    S0 = _as_spin_array(cell0)
    if S0.shape[0] == 2 and sigma_distance(S0) > tol:
        raise ValueError(f"start is not on the echo manifold (distance {sigma_distance(S0):.3g})")
    return echo_deviation(S0, T, settings, n_samples)


def echo_deviation(cell0, T, settings=DEFAULT_SETTINGS, n_samples=101) -> float:
    """Echo residual without the on-manifold precondition (O(1) off the manifold)."""
    S0 = _as_spin_array(cell0)
    grid = np.linspace(0.0, T, n_samples)
    fwd = integrate(S0, t_eval=grid, settings=settings).states
    bwd = integrate(S0, t_eval=grid, settings=settings, backward=True).states
    return float(max(np.max(np.abs(f - echo_conjugate(b))) for f, b in zip(fwd, bwd)))


# ---------------------------------------------------------------------------
# Lyapunov exponent


def lyapunov_max(state, horizon: float = 400.0, renorm_interval: float = 0.25,
                 settings: IntegratorSettings = DEFAULT_SETTINGS, seed: int = 0,
                 transient: float = 0.2, n_blocks: int = 10):
    """Largest Lyapunov exponent by tangent-vector propagation (per code time).

    The tangent vector lives on the same ring as ``state`` (a unit cell or a
    chain).  It is renormalized every ``renorm_interval``; log stretch factors
    after the first ``transient`` fraction are block-averaged to give the
    estimate and its standard error.
    """
    if horizon < 10 * renorm_interval:
        raise ValueError("horizon must be much longer than renorm_interval")
    S = np.array(_as_spin_array(state), dtype=float)
    n = S.shape[0]
    rng = np.random.default_rng(seed)
    e1, e2 = tangent_frame(S)
    a = rng.standard_normal((n, 2))
    v = a[:, :1] * e1 + a[:, 1:] * e2
    v /= np.linalg.norm(v)
    steps = int(round(horizon / renorm_interval))
    logs = np.empty(steps)
    for i in range(steps):
        S, D = propagate_tangent(S, [0.0], v[None, None], renorm_interval, settings)
        v = D[0, 0].real
        # keep the vector tangent to the renormalized spins
        v -= np.sum(v * S, axis=1)[:, None] * S
        g = np.linalg.norm(v)
        logs[i] = math.log(g)
        v /= g
    keep = logs[int(transient * steps):]
    blocks = np.array([b.sum() for b in np.array_split(keep, n_blocks)])
    lens = np.array([len(b) for b in np.array_split(keep, n_blocks)]) * renorm_interval
    rates = blocks / lens
    lam = float(keep.sum() / (len(keep) * renorm_interval))
    err = float(np.std(rates, ddof=1) / math.sqrt(n_blocks))
    return lam, err
