"""Linear stability of periodic orbits through the Bloch-decomposed one-period tangent map.

Tangent vectors at wavevector ``k`` (per site, reduced zone ``(-pi/n, pi/n]``)
are stored per unit cell: the deviation on site ``n*j + l`` is
``D[l] * exp(i k n j)``.  For two-site orbits rooted on the echo manifold the
map ``M_k`` is written in the special basis ``(v1, v2, v3, v4)``:

* ``v1`` odd under the echo map ``C``, built from the orbit velocity;
* ``v3`` even under ``C``, the second unit-eigenvalue direction at ``k = 0``;
* ``v2 = J v3`` and ``v4 = J v1`` with ``J`` the quarter turn about each spin.

In that basis ``M_k`` is real with blocks ``[[A, b sz], [c sz, A]]`` and
``A = [[a, f], [g, a]]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    DEFAULT_SETTINGS, IntegratorSettings, evolve, propagate_tangent, tangent_frame,
)
from .orbits import PeriodicOrbit, find_orbit_from_sigma, z2_sigma_crossing
from .spin import SigmaCoords, _as_spin_array, eom_rhs, rz_pi

STABLE_TOL = 1e-8
REAL_TOL = 1e-8


class StructuralViolation(RuntimeError):
    """A structural property the tangent map must have failed beyond tolerance."""


# ---------------------------------------------------------------------------
# bases


def _phases(k, n):
    return np.exp(1j * np.outer(np.atleast_1d(k), np.arange(n)))  # (nk, n)


def frame_vectors(spins, ks):
    """Generic orthonormal basis: ``e1``, ``e2`` on each site with plane-wave phases.

    Returns ``(nk, 2n, n, 3)`` complex; vector ``2l + a`` lives on site ``l``.
    """
    S = _as_spin_array(spins)
    n = S.shape[0]
    e1, e2 = tangent_frame(S)
    base = np.zeros((2 * n, n, 3))
    for l in range(n):
        base[2 * l, l] = e1[l]
        base[2 * l + 1, l] = e2[l]
    ph = _phases(ks, n)
    return base[None] * ph[:, None, :, None]


@dataclass(frozen=True)
class SpecialBasis:
    """Echo-adapted basis of a two-site orbit at its Sigma point."""

    spins: np.ndarray
    w: np.ndarray
    z: np.ndarray

    def vectors(self, ks) -> np.ndarray:
        """``(nk, 4, 2, 3)`` complex, ordered ``v1, v2, v3, v4``, orthonormal."""
        S = self.spins
        p1 = np.stack([self.w, -rz_pi(self.w)])
        p3 = np.stack([self.z, rz_pi(self.z)])
        ph = _phases(ks, 2)[:, :, None]
        v1 = p1[None] * ph
        v3 = p3[None] * ph
        v2 = np.cross(S[None], v3)
        v4 = np.cross(S[None], v1)
        return np.stack([v1, v2, v3, v4], axis=1) / math.sqrt(2.0)


def _project(B, DT):
    """``M[a, b] = <B_a, DT_b>`` batched over k."""
    return np.einsum("qanc,qbnc->qab", B.conj(), DT)


def _require_sigma(orbit: PeriodicOrbit):
    if orbit.n != 2 or orbit.sigma_coords is None:
        raise ValueError("the special basis needs a two-site orbit rooted on the echo manifold")


def special_basis(orbit: PeriodicOrbit, settings: IntegratorSettings = DEFAULT_SETTINGS
                  ) -> SpecialBasis:
    """Build ``v1 .. v4`` for ``orbit``.

    ``v3`` is found by solving ``M_0 x = x`` inside the C-even sector.  When
    ``M_0`` is the identity (Z2) every even vector qualifies and ``z = S x w``
    is kept.
    """
    _require_sigma(orbit)
    S = orbit.cell0.spins
    vel = eom_rhs(S)[0]
    w = vel / np.linalg.norm(vel)
    z0 = np.cross(S[0], w)
    trial = SpecialBasis(S, w, z0)
    B = trial.vectors([0.0])
    _, DT = propagate_tangent(S, [0.0], B, orbit.period, settings)
    M0 = _project(B, DT)[0].real
    dev = M0 - np.eye(4)
    if np.max(np.abs(dev)) < 1e-7:
        return trial
    # even sector is spanned by v3' = even(z0) and v2' = even(S x z0) = even(-w)
    _, sv, vt = np.linalg.svd(dev[:, [2, 1]])
    if sv[-1] > 1e-6 * max(1.0, sv[0]):
        raise StructuralViolation(f"no unit-eigenvalue vector in the C-even sector (sv={sv[-1]:.2e})")
    alpha, beta = vt[-1]
    if alpha < 0:
        alpha, beta = -alpha, -beta
    z = alpha * z0 - beta * w
    return SpecialBasis(S, w, z / np.linalg.norm(z))


# ---------------------------------------------------------------------------
# Bloch maps


@dataclass
class BlochMap:
    k: float
    matrix: np.ndarray
    eigenvalues: np.ndarray
    imag_residual: float
    raw: np.ndarray = field(repr=False)
    basis: np.ndarray = field(repr=False)
    spins: np.ndarray = field(repr=False)

    @property
    def quarter_trace(self) -> float:
        return float(np.trace(self.raw).real / self.raw.shape[0])

    @property
    def max_abs_eig(self) -> float:
        return float(np.max(np.abs(self.eigenvalues)))

    def j_matrix(self) -> np.ndarray:
        """Quarter-turn map ``J`` represented in this map's basis."""
        B = self.basis
        return np.einsum("anc,bnc->ab", B.conj(), np.cross(self.spins[None], B))

    def c_matrix(self) -> np.ndarray:
        """Echo map ``C`` (translate by one site, then rotate by pi) at this ``k``."""
        B = self.basis
        n = B.shape[1]
        CB = rz_pi(np.roll(B.real, 1, axis=1)) + 1j * rz_pi(np.roll(B.imag, 1, axis=1))
        CB[:, 0] *= np.exp(-1j * self.k * n)
        return np.einsum("anc,bnc->ab", B.conj(), CB)

    def symplectic_residual(self) -> float:
        J = self.j_matrix()
        M = self.raw
        return float(np.max(np.abs(M.conj().T @ J @ M - J)))

    def conjugation_residual(self) -> float:
        """``|M^-1 - C^-1 M C|``; small only for orbits rooted on the echo manifold."""
        C = self.c_matrix()
        M = self.raw
        return float(np.max(np.abs(np.linalg.inv(M) - np.linalg.solve(C, M @ C))))


def bloch_maps(orbit: PeriodicOrbit, ks, settings: IntegratorSettings = DEFAULT_SETTINGS,
               basis: SpecialBasis | None = None) -> list:
    """One-period tangent maps for all ``ks`` from a single batched integration.

    Two-site orbits on the echo manifold use the special basis, all others the
    site frame basis.
    """
    ks = np.atleast_1d(np.asarray(ks, dtype=float))
    n = orbit.n
    if np.any(ks <= -math.pi / n) or np.any(ks > math.pi / n + 1e-15):
        raise ValueError(f"k outside the reduced zone (-pi/{n}, pi/{n}]")
    S = orbit.cell0.spins
    if n == 2 and orbit.sigma_coords is not None:
        basis = basis or special_basis(orbit, settings)
        B = basis.vectors(ks)
    else:
        B = frame_vectors(S, ks)
    _, DT = propagate_tangent(S, ks, B, orbit.period, settings)
    Ms = _project(B, DT)
    out = []
    for q, k in enumerate(ks):
        M = Ms[q]
        imag = float(np.max(np.abs(M.imag)))
        mat = M.real if imag < REAL_TOL else M
        out.append(BlochMap(float(k), mat, np.linalg.eigvals(mat), imag, M, B[q], S))
    return out


def bloch_map(orbit: PeriodicOrbit, k: float, settings: IntegratorSettings = DEFAULT_SETTINGS,
              basis: SpecialBasis | None = None) -> BlochMap:
    return bloch_maps(orbit, [k], settings, basis)[0]


def eigenvalues_paired(m: BlochMap, tol: float = 1e-6, group_tol: float = 1e-4):
    """Group eigenvalues into ``(lambda, multiplicity)``.

    Raises :class:`StructuralViolation` if the spectrum is not closed under
    ``lambda -> 1/lambda`` and ``lambda -> conj(lambda)``.  Near-degenerate
    values (Jordan blocks split by rounding) are merged within ``group_tol``.
    """
    ev = np.asarray(m.eigenvalues, dtype=complex)
    res = spectrum_closure_residual(ev)
    if res > tol:
        raise StructuralViolation(f"eigenvalue pairing residual {res:.2e} exceeds {tol:.0e}")
    groups: list[list[complex]] = []
    for lam in sorted(ev, key=lambda z: (round(z.real, 6), round(z.imag, 6))):
        for g in groups:
            if abs(np.mean(g) - lam) < group_tol:
                g.append(lam)
                break
        else:
            groups.append([lam])
    return [(complex(np.mean(g)), len(g)) for g in groups]


def spectrum_closure_residual(ev) -> float:
    """Worst distance from ``1/lambda`` or ``conj(lambda)`` to the nearest eigenvalue."""
    ev = np.asarray(ev, dtype=complex)
    worst = 0.0
    for lam in ev:
        for img in (1.0 / lam, np.conj(lam)):
            worst = max(worst, float(np.min(np.abs(ev - img))))
    return worst


# ---------------------------------------------------------------------------
# structure parameters


@dataclass
class StructureParams:
    ks: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    f: np.ndarray
    g: np.ndarray
    f0: float
    gpp0: float
    mu: float | None
    phi_disp: float | None

    @property
    def constraint_residual(self) -> float:
        return float(np.max(np.abs(self.f * self.g - (self.a ** 2 - 1.0 - self.b * self.c))))

    @property
    def is_z2_like(self) -> bool:
        return self.mu is None


def _entries(maps):
    M = np.array([m.raw.real for m in maps])
    return M[:, 0, 0], M[:, 0, 2], M[:, 2, 0], M[:, 0, 1], M[:, 1, 0]


def extract_structure(orbit: PeriodicOrbit, ks=None, settings: IntegratorSettings = DEFAULT_SETTINGS,
                      dk: float = 1e-2, basis: SpecialBasis | None = None) -> StructureParams:
    """Read ``a, b, c, f, g`` off the special-basis maps and derive ``mu``, ``phi``.

    ``g''(0)`` is the Richardson extrapolation of central second differences
    with steps ``dk`` and ``2 dk``.
    """
    _require_sigma(orbit)
    if ks is None:
        ks = np.linspace(0.0, 0.5 * math.pi, 33)
    ks = np.asarray(ks, dtype=float)
    basis = basis or special_basis(orbit, settings)
    probe = np.array([0.0, dk, -dk, 2 * dk, -2 * dk])
    maps = bloch_maps(orbit, np.concatenate([probe, ks]), settings, basis)
    a, b, c, f, g = _entries(maps)
    g0, gp1, gm1, gp2, gm2 = g[:5]
    d1 = (gp1 - 2 * g0 + gm1) / dk ** 2
    d2 = (gp2 - 2 * g0 + gm2) / (2 * dk) ** 2
    gpp0 = float((4 * d1 - d2) / 3)
    f0 = float(f[0])
    mu = phi = None
    if abs(f0) > 1e-6 and f0 * gpp0 < 0:
        mu = math.sqrt(-gpp0 / (2 * f0))
        phi = math.sqrt(-f0 * gpp0 / 2)
    s = slice(5, None)
    return StructureParams(ks, a[s], b[s], c[s], f[s], g[s], f0, gpp0, mu, phi)


def linear_growth_coefficient(params: StructureParams) -> tuple[float, bool]:
    """Per-period slope of the ensemble growth on a stable orbit, and the Z2-marginal flag.

    ``c_lin = f0^2 / sqrt(-2 f0 g''(0))``.
    """
    if abs(params.f0) < 1e-6:
        return 0.0, True
    prod = params.f0 * params.gpp0
    if prod >= 0:
        raise ValueError("f0 g''(0) must be negative for a linearly stable orbit")
    return params.f0 ** 2 / math.sqrt(-2.0 * prod), False


def ring_wavevectors(N: int, n: int = 2) -> np.ndarray:
    """Per-site wavevectors of an ``N``-site ring inside the reduced zone ``(-pi/n, pi/n]``."""
    if N % n:
        raise ValueError(f"N={N} is not a multiple of the cell size {n}")
    m = np.arange(N // n) - (N // n - 1) // 2
    return 2.0 * math.pi * m / N


def linearized_growth(orbit: PeriodicOrbit, n_max: int, N: int = 256,
                      settings: IntegratorSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """``<dS^2(nT)>/<dS^2(0)>`` for ``n = 0..n_max`` in the linear regime.

    Isotropic tangent-plane noise on an ``N``-site ring gives
    ``mean_k |M_k^n|_F^2 / 2n`` with ``M_k`` in the orthonormal frame basis.
    """
    frame = PeriodicOrbit(orbit.n, orbit.cell0, orbit.period)
    maps = bloch_maps(frame, ring_wavevectors(N, orbit.n), settings)
    out = np.empty(n_max + 1)
    P = np.array([np.eye(2 * orbit.n, dtype=complex) for _ in maps])
    M = np.array([m.matrix for m in maps])
    for j in range(n_max + 1):
        out[j] = float(np.mean(np.sum(np.abs(P) ** 2, axis=(1, 2)))) / (2 * orbit.n)
        P = M @ P
    return out


# ---------------------------------------------------------------------------
# classification


@dataclass
class StabilityVerdict:
    stable: bool
    k_star: float | None
    boundary_type: str
    max_abs_eig: float
    ks: np.ndarray
    quarter_trace_curve: np.ndarray
    marginal: bool = False

    @property
    def max_abs_quarter_trace(self) -> float:
        return float(np.max(np.abs(self.quarter_trace_curve)))


def quarter_traces(orbit, ks, settings=DEFAULT_SETTINGS, basis=None):
    """``Tr(M_k) / 2n`` at each ``k``; basis independent."""
    maps = bloch_maps(orbit, ks, settings, basis)
    return np.array([m.quarter_trace for m in maps]), maps


def classify_orbit(orbit: PeriodicOrbit, n_k: int = 256,
                   settings: IntegratorSettings = DEFAULT_SETTINGS,
                   bisect_tol: float = 1e-6, refine: bool = True) -> StabilityVerdict:
    """Stable iff ``|Tr(M_k)/4| <= 1 + 1e-8`` on ``n_k`` samples of ``[0, pi/2]``.

    For unstable orbits the first exit wavevector ``k*`` is bracketed on the
    grid and, with ``refine``, narrowed by bisection on ``|a(k)| - 1``; the boundary type says
    whether ``a`` left through ``+1`` or ``-1``.
    """
    if orbit.n != 2:
        raise ValueError("quarter-trace classification is defined for two-site orbits")
    ks = np.linspace(0.0, 0.5 * math.pi, n_k)
    # the trace does not depend on the basis, so the cheap frame basis is used
    frame_orbit = PeriodicOrbit(orbit.n, orbit.cell0, orbit.period)
    a, maps = quarter_traces(frame_orbit, ks, settings)
    max_eig = max(m.max_abs_eig for m in maps)
    over = np.abs(a) > 1.0 + STABLE_TOL
    if not over.any():
        marginal = bool(np.max(np.abs(a - 1.0)) < 1e-6)
        return StabilityVerdict(True, None, "none", max_eig, ks, a, marginal)
    j = int(np.argmax(over))
    sign = 1.0 if a[j] > 0 else -1.0
    lo, hi = ks[max(j - 1, 0)], ks[j]

    def excess(k):
        return sign * quarter_traces(frame_orbit, [k], settings)[0][0] - 1.0 - STABLE_TOL

    if j > 0 and refine:
        while hi - lo > bisect_tol:
            mid = 0.5 * (lo + hi)
            if excess(mid) > 0:
                hi = mid
            else:
                lo = mid
    k_star = (0.5 * (lo + hi) if refine else hi) if j > 0 else 0.0
    btype = "plus_one" if sign > 0 else "minus_one"
    return StabilityVerdict(False, k_star, btype, max_eig, ks, a, False)


# ---------------------------------------------------------------------------
# oracles


def fd_jacobian_k0(orbit: PeriodicOrbit, h: float = 1e-6,
                   settings: IntegratorSettings | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Brute-force one-period Jacobian on a two-cell ring, cell-periodic displacements.

    Returns ``(J_fd, M_var)`` in the same real site-frame basis, the second
    from the variational equations.
    """
    settings = settings or DEFAULT_SETTINGS.tightened(1000.0)
    S = orbit.cell0.spins
    n = S.shape[0]
    B = frame_vectors(S, [0.0])[0].real  # (2n, n, 3)
    chain = np.tile(S, (2, 1))
    cols = []
    for b in B:
        d = np.tile(b, (2, 1))
        ends = []
        for sgn in (1.0, -1.0):
            P = chain + sgn * h * d
            P /= np.linalg.norm(P, axis=1)[:, None]
            ends.append(evolve(P, orbit.period, settings)[:n])
        diff = (ends[0] - ends[1]) / (2 * h)
        cols.append(np.einsum("anc,nc->a", B, diff))
    J_fd = np.array(cols).T
    _, DT = propagate_tangent(S, [0.0], B[None].astype(complex), orbit.period, settings)
    M_var = _project(B[None].astype(complex), DT)[0].real
    return J_fd, M_var


def period_gradient_direction(orbit: PeriodicOrbit, h: float = 1e-5,
                              settings: IntegratorSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """Unit gradient of ``T`` on Sigma, as a vector in the even spin's tangent plane.

    Cross-check for ``v3``: moving along ``z`` leaves the period unchanged to
    first order, so ``z`` is orthogonal to this gradient.
    """
    _require_sigma(orbit)
    c = orbit.sigma_coords
    grads = []
    for dth, dph in ((h, 0.0), (0.0, h)):
        Tp = find_orbit_from_sigma(SigmaCoords(c.theta_e + dth, c.phi_e + dph), settings).period
        Tm = find_orbit_from_sigma(SigmaCoords(c.theta_e - dth, c.phi_e - dph), settings).period
        grads.append((Tp - Tm) / (2 * h))
    th, ph = c.theta_e, c.phi_e
    e_th = np.array([math.cos(th) * math.cos(ph), math.cos(th) * math.sin(ph), -math.sin(th)])
    e_ph = np.array([-math.sin(ph), math.cos(ph), 0.0])
    # metric on the sphere: d/dphi has length sin(theta)
    v = grads[0] * e_th + grads[1] / math.sin(th) * e_ph
    return v / np.linalg.norm(v)


# ---------------------------------------------------------------------------
# neighbourhood of the Z2 orbit


@dataclass
class LandscapeRow:
    d_theta: float
    d_phi: float
    r: float
    s: float
    r_err: float
    max_eig_dev: float

    @property
    def norm(self) -> float:
        return math.hypot(self.d_theta, self.d_phi)


@dataclass
class LandscapeFit:
    rows: list
    form: np.ndarray  # [[A, B], [B, C]] with r ~ A dth^2 + 2 B dth dph + C dph^2
    signature: tuple
    sign_changes: int


def _fit_rs(ks, a):
    X = np.stack([ks ** 2, -ks ** 4], axis=1)
    coef, res, *_ = np.linalg.lstsq(X, a - 1.0, rcond=None)
    resid = a - 1.0 - X @ coef
    dof = max(len(ks) - 2, 1)
    cov = np.linalg.inv(X.T @ X) * float(resid @ resid) / dof
    return float(coef[0]), float(coef[1]), float(math.sqrt(max(cov[0, 0], 0.0)))


def landscape_point(d_theta: float, d_phi: float, settings=DEFAULT_SETTINGS,
                    k_fit=None, k_full=None) -> LandscapeRow:
    """``r``, ``s`` of ``a(k) = 1 + r k^2 - s k^4`` and ``max_k |lambda_k - 1|`` at Z2 + Delta."""
    if math.hypot(d_theta, d_phi) > 0.2 + 1e-12:
        raise ValueError("displacement norm must not exceed 0.2")
    if k_fit is None:
        k_fit = np.linspace(0.05, 0.5, 10)
    if k_full is None:
        k_full = np.linspace(0.0, 0.5 * math.pi, 33)
    c = SigmaCoords(z2_sigma_crossing() + d_theta, 0.5 * math.pi + d_phi)
    orbit = find_orbit_from_sigma(c, settings, n_samples=2)
    fo = PeriodicOrbit(2, orbit.cell0, orbit.period)
    maps = bloch_maps(fo, np.concatenate([k_fit, k_full]), settings)
    a = np.array([m.quarter_trace for m in maps[: len(k_fit)]])
    r, s, r_err = _fit_rs(np.asarray(k_fit), a)
    dev = max(float(np.max(np.abs(m.eigenvalues - 1.0))) for m in maps[len(k_fit):])
    return LandscapeRow(d_theta, d_phi, r, s, r_err, dev)


def near_z2_landscape(deltas, settings: IntegratorSettings = DEFAULT_SETTINGS) -> list:
    """:func:`landscape_point` over displacements ``(d_theta, d_phi)``."""
    return [landscape_point(float(d[0]), float(d[1]), settings) for d in deltas]


def fit_quadratic_form(rows) -> LandscapeFit:
    """Fit ``r(Delta)`` by a quadratic form and report its signature.

    ``sign_changes`` counts sign flips of ``r`` going once around the rows
    (meaningful when the rows sample a circle in angular order).
    """
    d = np.array([[r.d_theta, r.d_phi] for r in rows])
    y = np.array([r.r for r in rows])
    X = np.stack([d[:, 0] ** 2, 2 * d[:, 0] * d[:, 1], d[:, 1] ** 2], axis=1)
    (A, B, C), *_ = np.linalg.lstsq(X, y, rcond=None)
    form = np.array([[A, B], [B, C]])
    ev = np.linalg.eigvalsh(form)
    signature = (int(np.sum(ev > 0)), -int(np.sum(ev < 0)))
    sg = np.sign(y)
    changes = int(np.sum(sg != np.roll(sg, 1)))
    return LandscapeFit(list(rows), form, signature, changes)
