"""Gaussian ensembles around reference trajectories and the growth of their spread."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynamics import DEFAULT_SETTINGS, IntegrationError, IntegratorSettings, integrate, tangent_frame
from .spin import SpinChain, UnitCell, _as_spin_array

EPS_MAX = 0.3
SATURATION = 0.1


class NotReached(LookupError):
    """The ensemble spread never reached the requested threshold."""


@dataclass(frozen=True)
class PerturbationSpec:
    """Per-site RMS displacement ``epsilon`` (``= 1/sqrt(S)``) and a 64-bit master seed."""

    epsilon: float
    seed: int = 0
    mode: str = "tangent-gaussian"

    def __post_init__(self):
        if not (0.0 <= self.epsilon < EPS_MAX):
            raise ValueError(f"epsilon must lie in [0, {EPS_MAX}), got {self.epsilon}")
        if not (0 <= int(self.seed) < 2 ** 64):
            raise ValueError("seed must be a non-negative 64-bit integer")
        if self.mode != "tangent-gaussian":
            raise ValueError(f"unknown perturbation mode {self.mode!r}")


def realization_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for realization ``index`` of master ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def sample_perturbation(reference, spec: PerturbationSpec, rng: np.random.Generator | None = None
                        ) -> SpinChain:
    """Displace every spin in its tangent plane by two Gaussians of variance ``eps^2 / 2``.

    The result is renormalized to unit length; no projection onto the
    zero-energy shell.
    """
    S = np.asarray(_as_spin_array(reference), dtype=float)
    if spec.epsilon == 0.0:
        return SpinChain(S)
    rng = rng if rng is not None else realization_rng(spec.seed, 0)
    e1, e2 = tangent_frame(S)
    a = rng.standard_normal((S.shape[0], 2)) * (spec.epsilon / math.sqrt(2.0))
    P = S + a[:, :1] * e1 + a[:, 1:] * e2
    P /= np.linalg.norm(P, axis=1)[:, None]
    return SpinChain(P)


# ---------------------------------------------------------------------------
# ensembles


@dataclass
class GrowthSeries:
    times: np.ndarray
    mean_ratio: np.ndarray
    stderr: np.ndarray
    mean_dS2: np.ndarray
    n_realizations: int
    n_failed: int
    epsilon: float
    period: float
    N: int
    reference: str = ""
    per_realization: np.ndarray | None = field(default=None, repr=False)

    @property
    def t_over_T(self) -> np.ndarray:
        return self.times / self.period

    @property
    def x(self) -> np.ndarray:
        """Scaling variable ``eps t / T``."""
        return self.epsilon * self.t_over_T

    @property
    def per_site(self) -> np.ndarray:
        """``<dS^2>/N``, the saturation measure."""
        return self.mean_dS2 / self.N

    @property
    def stroboscopic(self) -> np.ndarray:
        """Mask of samples taken at whole periods."""
        n = self.t_over_T
        return np.abs(n - np.round(n)) < 1e-6


def _reference_states(reference, N, times, settings):
    if isinstance(reference, UnitCell):
        traj = integrate(reference, t_eval=times, settings=settings)
        return np.tile(traj.states, (1, N // reference.n, 1)), reference.tile(N).spins
    S = np.asarray(_as_spin_array(reference), dtype=float)
    if S.shape[0] != N:
        raise ValueError(f"reference chain has {S.shape[0]} sites, expected N={N}")
    return integrate(S, t_eval=times, settings=settings).states, S


def _one_realization(args):
    index, S0, ref, times, spec, settings = args
    P = sample_perturbation(S0, spec, realization_rng(spec.seed, index))
    try:
        states = integrate(P, t_eval=times, settings=settings).states
    except IntegrationError:
        return index, None
    return index, np.sum((states - ref) ** 2, axis=(1, 2))


def growth_series(reference, epsilon: float, N: int, n_real: int = 100, horizon: float = 100.0,
                  period: float = 1.0, dt: float | None = None,
                  settings: IntegratorSettings = DEFAULT_SETTINGS, seed: int = 0,
                  workers: int = 1, descriptor: str = "", keep_realizations: bool = False
                  ) -> GrowthSeries:
    """``<dS^2(t)>/<dS^2(0)>`` over ``n_real`` perturbed copies of ``reference``.

    ``reference`` is a :class:`UnitCell` tiled to ``N`` sites or an ``N``-site
    chain.  Deviations are taken against the synchronously evolved reference.
    Samples every ``dt`` (default ``period / 20``) up to ``horizon``.
    Realizations are combined in index order, so the result does not depend
    on ``workers``.
    """
    if n_real < 2:
        raise ValueError("need at least two realizations")
    n_cell = reference.n if isinstance(reference, UnitCell) else 1
    if N < 2 * n_cell:
        raise ValueError("N must cover at least two unit cells")
    spec = PerturbationSpec(epsilon, seed)
    dt = period / 20.0 if dt is None else dt
    times = np.arange(0.0, horizon + 0.5 * dt, dt)
    ref, S0 = _reference_states(reference, N, times, settings)
    tasks = [(r, S0, ref, times, spec, settings) for r in range(n_real)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_realization, tasks))
    else:
        results = [_one_realization(t) for t in tasks]
    results.sort(key=lambda r: r[0])
    good = [d for _, d in results if d is not None]
    failed = len(results) - len(good)
    if len(good) < 2:
        raise IntegrationError(-1, float("nan"), None)
    D = np.stack(good)
    m0 = float(np.mean(D[:, 0]))
    mean = np.mean(D, axis=0)
    ratio = mean / m0
    ratio[0] = 1.0
    err = np.std(D / m0, axis=0, ddof=1) / math.sqrt(D.shape[0])
    return GrowthSeries(times, ratio, err, mean, D.shape[0], failed, float(epsilon), float(period),
                        int(N), descriptor, D if keep_realizations else None)


# ---------------------------------------------------------------------------
# fits


def _window_mask(series: GrowthSeries, x_min: float, x_max: float | None, guard: float):
    ok = (series.x >= x_min) & (series.per_site <= guard)
    if x_max is not None:
        ok &= series.x <= x_max
    # stop at the first saturated sample
    sat = np.nonzero(series.per_site > guard)[0]
    if sat.size:
        ok[sat[0]:] = False
    return ok


def fit_growth_rate(series: GrowthSeries, x_min: float = 0.3, x_max: float | None = None,
                    guard: float = SATURATION, stroboscopic: bool = True) -> float:
    """Slope of ``log <dS^2>`` per unit time over the exponential window."""
    ok = _window_mask(series, x_min, x_max, guard)
    if stroboscopic:
        ok &= series.stroboscopic
    if ok.sum() < 3:
        raise ValueError("fit window holds fewer than three samples")
    return float(np.polyfit(series.times[ok], np.log(series.mean_ratio[ok]), 1)[0])


def fit_rate_per_period(series: GrowthSeries, n_lo: float, n_hi: float,
                        guard: float = SATURATION) -> float:
    """Slope of ``log <dS^2>`` per period between ``n_lo`` and ``n_hi`` periods."""
    n = series.t_over_T
    ok = (n >= n_lo) & (n <= n_hi) & (series.per_site <= guard)
    if ok.sum() < 3:
        raise ValueError("fit window holds fewer than three samples")
    return float(np.polyfit(n[ok], np.log(series.mean_ratio[ok]), 1)[0])


def fit_linear_slope(series: GrowthSeries, n_max: float = 30.0, stroboscopic: bool = True
                     ) -> tuple[float, float]:
    """Per-period slope of the ratio over ``t <= n_max T`` and its standard error.

    With ``stroboscopic`` only samples at whole periods enter.
    """
    n = series.t_over_T
    ok = n <= n_max + 1e-9
    if stroboscopic:
        ok &= np.abs(n - np.round(n)) < 1e-6
    x, y, s = n[ok], series.mean_ratio[ok], series.stderr[ok]
    if x.size < 3:
        raise ValueError("need at least three samples for a slope")
    X = np.stack([np.ones_like(x), x], axis=1)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    # errors from the per-sample standard errors (correlations ignored)
    cov = np.linalg.pinv(X.T @ X) @ X.T @ np.diag(s ** 2) @ X @ np.linalg.pinv(X.T @ X)
    return float(coef[1]), float(math.sqrt(max(cov[1, 1], 0.0)))


def fit_polynomial_per_period(series: GrowthSeries, n_max: float = 30.0, degree: int = 2
                              ) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients of the ratio as a polynomial in ``n = t / T`` and their standard errors.

    Uses whole-period samples with ``n <= n_max``.  Needs the per-realization
    data (``keep_realizations=True``): the fit is linear in the data, so each
    realization gets its own coefficients and the spread of those gives errors
    that include the correlation between times.
    """
    if series.per_realization is None:
        raise ValueError("series was computed without keep_realizations")
    n = series.t_over_T
    ok = series.stroboscopic & (n <= n_max + 1e-9)
    if ok.sum() < degree + 2:
        raise ValueError("too few samples for the polynomial degree")
    D = series.per_realization[:, ok]
    R = D / np.mean(D[:, 0])
    P = np.linalg.pinv(np.vander(n[ok], degree + 1, increasing=True))
    coefs = R @ P.T
    return coefs.mean(axis=0), coefs.std(axis=0, ddof=1) / math.sqrt(coefs.shape[0])


@dataclass
class CollapseResult:
    x: np.ndarray
    phis: dict
    epsilons: list
    residual: float | None
    relative_residual: float | None
    window: tuple
    degenerate: bool
    samples: list = field(default_factory=list, repr=False)  # (x, phi, eps, per_site) per series
    phi0: float | None = None
    kappa: float | None = None
    convention: str = "squared-norm ratio"


def collapse_from_arrays(samples, window=(0.1, 0.8), n_grid: int = 200) -> CollapseResult:
    """Collapse from raw ``(x, phi, eps)`` or ``(x, phi, eps, per_site)`` tuples."""
    samples = [tuple(np.asarray(a, dtype=float) for a in s[:2]) + (float(s[2]),)
               + ((np.asarray(s[3], dtype=float),) if len(s) > 3 else
                  (np.asarray(s[1], dtype=float) * float(s[2]) ** 2,))
               for s in samples]
    eps = [s[2] for s in samples]
    degenerate = len(set(eps)) < 3
    lo = max([window[0]] + [float(s[0][0]) for s in samples])
    hi_list = [window[1]]
    for x, _, _, ps in samples:
        sat = np.nonzero(ps > SATURATION)[0]
        hi_list.append(float(x[sat[0] - 1]) if sat.size else float(x[-1]))
    hi = min(hi_list)
    if degenerate:
        return CollapseResult(np.array([]), {}, eps, None, None, (lo, hi), True, samples)
    if hi <= lo:
        raise ValueError(f"insufficient overlap of the scaled ranges: [{lo:.3g}, {hi:.3g}]")
    grid = np.linspace(lo, hi, n_grid)
    phis = {e: np.interp(grid, x, phi) for x, phi, e, _ in samples}
    curves = list(phis.values())
    gap = max(float(np.max(np.abs(a - b))) for i, a in enumerate(curves) for b in curves[i + 1:])
    stack = np.stack(curves)
    rng = float(np.max(stack) - np.min(stack))
    return CollapseResult(grid, phis, eps, gap, gap / rng if rng > 0 else math.inf,
                          (lo, hi), False, samples)


def scaling_collapse(series_list, window=(0.1, 0.8), n_grid: int = 200,
                     stroboscopic: bool = True) -> CollapseResult:
    """Resample each series onto ``x = eps t / T`` and measure the pairwise sup gap.

    With ``stroboscopic`` only samples at whole periods enter: the deviation
    oscillates within each period, and for generic ``eps`` a fixed ``x``
    falls at a different orbit phase in each series.  Fewer than three
    distinct ``eps`` values is flagged as degenerate and no residual is
    reported.
    """
    samples = []
    for s in series_list:
        m = s.stroboscopic if stroboscopic else np.ones(s.times.size, dtype=bool)
        samples.append((s.x[m], s.mean_ratio[m], s.epsilon, s.per_site[m]))
    return collapse_from_arrays(samples, window, n_grid)


def fit_exponential(collapse: CollapseResult, x_min: float = 0.3, x_max: float = 0.5,
                    guard: float = SATURATION) -> tuple[float, float]:
    """Least squares of ``log Phi = log Phi0 + kappa x`` over all series.

    Each series contributes samples in ``[x_min, x_max]`` up to where its
    ``<dS^2>/N`` first exceeds ``guard``.  The local slope of ``log Phi``
    decreases slowly with ``x`` (about 4.1 just after the crossover, 3.3
    near ``x = 1``), so the window is part of the result.
    """
    xs, ys = [], []
    for x, phi, _, ps in collapse.samples:
        ok = (x >= x_min) & (x <= x_max)
        sat = np.nonzero(ps > guard)[0]
        if sat.size:
            ok[sat[0]:] = False
        xs.append(x[ok])
        ys.append(np.log(phi[ok]))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    if x.size < 3 or np.ptp(x) < 0.05:
        raise ValueError("fit window too short")
    kappa, logphi0 = np.polyfit(x, y, 1)
    collapse.phi0, collapse.kappa = float(math.exp(logphi0)), float(kappa)
    return collapse.phi0, collapse.kappa


def coherence_time(series: GrowthSeries, threshold: float = SATURATION) -> float:
    """First time ``<dS^2>/N`` reaches ``threshold``, linearly interpolated."""
    if threshold <= 0.0:
        return 0.0
    y = series.per_site
    idx = np.nonzero(y >= threshold)[0]
    if idx.size == 0:
        raise NotReached(f"<dS^2>/N peaked at {y.max():.3g} < {threshold}")
    j = int(idx[0])
    if j == 0:
        return float(series.times[0])
    t0, t1 = series.times[j - 1], series.times[j]
    y0, y1 = y[j - 1], y[j]
    return float(t0 + (threshold - y0) * (t1 - t0) / (y1 - y0))
