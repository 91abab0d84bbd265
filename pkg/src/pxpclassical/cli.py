"""Command-line experiment runner: ``pxpc <subcommand> [options]``.

Every option can also come from a TOML file given with ``--config``; flags
win over the file.  The output directory is resolved as flag, then the
``PXPC_OUTPUT_DIR`` environment variable, then the file, then ``pxpc-out``.
Each run writes ``manifest.json`` next to its CSV files.

Exit codes: 0 success, 1 invalid configuration, 2 some tasks failed,
3 invariant check failed, 4 every task failed.
"""

from __future__ import annotations

import argparse
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL, EXIT_CHECK, EXIT_FAILED = 0, 1, 2, 3, 4
OUTPUT_ENV = "PXPC_OUTPUT_DIR"
UNITS = {
    "time": "1/(2 J S^2)",
    "energy": "2 J S^3",
    "spin": "unit vectors",
    "epsilon": "per-site RMS displacement, 1/sqrt(S)",
    "growth_ratio": "<|dS(t)|^2> / <|dS(0)|^2> (squared-norm ratio)",
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# option table: name -> (type, default, validator, help)


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _eps_ok(v):
    return all(0 < e < 0.3 for e in v)


def _floats(text):
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [float(x) for x in str(text).split(",") if x.strip()]


COMMON = {
    "out": (str, "pxpc-out", None, "output directory"),
    "seed": (int, 0, lambda v: 0 <= v < 2 ** 64, "master seed"),
    "workers": (int, 1, _pos, "worker threads"),
    "rtol": (float, 1e-10, _pos, "integrator relative tolerance"),
    "atol": (float, 1e-12, _pos, "integrator absolute tolerance"),
}

COMMANDS = {
    "scan-stability": ("period and stability over a (theta_e, phi_e) grid", {
        "n_theta": (int, 200, lambda v: v >= 2, "grid points in theta_e"),
        "n_phi": (int, 200, lambda v: v >= 2, "grid points in phi_e"),
        "n_k": (int, 256, lambda v: v >= 2, "wavevector samples"),
        "horizon": (float, 50.0, _pos, "longest period searched"),
    }),
    "trace-mk": ("quarter trace of the Bloch map versus k", {
        "orbit": (str, "z2", None, "z2 or sigma:THETA,PHI"),
        "n_k": (int, 256, lambda v: v >= 2, "wavevector samples"),
    }),
    "orbit": ("find one closed orbit and export a period of it", {
        "orbit": (str, "z2", None, "z2, sigma:THETA,PHI or theta:A,B[,C]"),
        "n_samples": (int, 201, lambda v: v >= 2, "samples over one period"),
    }),
    "growth": ("ensemble growth of fluctuations", {
        "init": (str, "z2", None, "z2, zn:N, sigma:THETA,PHI or file:PATH"),
        "N": (int, 100, lambda v: v >= 4, "chain length"),
        "eps": (_floats, [0.01], _eps_ok, "comma-separated epsilons"),
        "n_real": (int, 100, lambda v: v >= 2, "realizations per epsilon"),
        "periods": (float, 200.0, _pos, "horizon in orbit periods"),
        "samples_per_period": (int, 20, _pos, "samples per period"),
    }),
    "collapse": ("scaling collapse and exponential fit over several epsilons", {
        "init": (str, "z2", None, "z2, zn:N, sigma:THETA,PHI or file:PATH"),
        "N": (int, 100, lambda v: v >= 4, "chain length"),
        "eps": (_floats, [0.01, 0.01 / math.sqrt(2), 0.005], _eps_ok, "comma-separated epsilons"),
        "n_real": (int, 100, lambda v: v >= 2, "realizations per epsilon"),
        "x_end": (float, 2.6, _pos, "largest eps*t/T simulated"),
        "x_min": (float, 0.3, _nonneg, "start of the exponential fit window"),
        "x_max": (float, 0.5, _pos, "end of the exponential fit window"),
        "samples_per_period": (int, 20, _pos, "samples per period"),
    }),
    "lyapunov": ("largest Lyapunov exponent", {
        "init": (str, "zn:4", None, "z2, zn:N, sigma:THETA,PHI or file:PATH"),
        "horizon": (float, 400.0, _pos, "integration time"),
        "renorm_interval": (float, 0.25, _pos, "time between renormalizations"),
    }),
    "near-z2": ("a(k) = 1 + r k^2 - s k^4 around the Z2 orbit", {
        "radii": (_floats, [0.025, 0.05, 0.1, 0.2], lambda v: all(0 < r <= 0.2 for r in v),
                  "displacement norms"),
        "n_angles": (int, 16, lambda v: v >= 4, "directions per radius"),
    }),
    "check": ("run the invariant suite", {}),
    "export-trajectory": ("integrate a state and export the samples", {
        "init": (str, "z2", None, "z2, zn:N, sigma:THETA,PHI, theta:A,B,... or file:PATH"),
        "N": (int, 0, _nonneg, "tile a unit cell to N sites (0 keeps the cell)"),
        "t_end": (float, 10.0, _pos, "final time"),
        "n_samples": (int, 201, lambda v: v >= 2, "samples"),
    }),
}


def _load_toml(path):
    try:
        import tomllib  # type: ignore[import-not-found]
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def resolve_config(command: str, flags: dict, config_path: str | None = None,
                   environ=os.environ) -> dict:
    """Merge built-in defaults, the TOML file, the environment and flags; validate."""
    options = {**COMMON, **COMMANDS[command][1]}
    file_cfg = _load_toml(config_path) if config_path else {}
    if command in file_cfg and isinstance(file_cfg[command], dict):
        # per-command table overrides top-level keys
        section = file_cfg.pop(command)
        file_cfg = {k: v for k, v in file_cfg.items() if not isinstance(v, dict)} | section
    unknown = sorted(set(file_cfg) - set(options))
    if unknown:
        raise ConfigError(f"{config_path}: unknown key(s) for '{command}': {', '.join(unknown)}")
    cfg = {}
    for name, (typ, default, check, _) in options.items():
        src = "default"
        value = default
        if name in file_cfg:
            value, src = file_cfg[name], f"{config_path}:{name}"
        if name == "out" and environ.get(OUTPUT_ENV):
            value, src = environ[OUTPUT_ENV], OUTPUT_ENV
        if flags.get(name) is not None:
            value, src = flags[name], f"--{name.replace('_', '-')}"
        try:
            value = typ(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{src}: invalid value {value!r} for '{name}'") from exc
        if check is not None and not check(value):
            raise ConfigError(f"{src}: value {value!r} out of range for '{name}'")
        cfg[name] = value
    return cfg


# ---------------------------------------------------------------------------
# descriptors


def _settings(cfg):
    from .dynamics import IntegratorSettings

    return IntegratorSettings(rtol=cfg["rtol"], atol=cfg["atol"])


def parse_orbit(text, settings):
    from .orbits import find_orbit_from_sigma, theta_orbit, z2_orbit
    from .spin import SigmaCoords

    kind, _, arg = text.partition(":")
    try:
        if kind == "z2":
            return z2_orbit(settings)
        if kind == "sigma":
            th, ph = _floats(arg)
            return find_orbit_from_sigma(SigmaCoords(th, ph), settings)
        if kind == "theta":
            return theta_orbit(_floats(arg), settings)
    except ValueError as exc:
        raise ConfigError(f"--orbit {text!r}: {exc}") from exc
    raise ConfigError(f"--orbit {text!r}: expected z2, sigma:THETA,PHI or theta:A,B[,C]")


def parse_init(text, settings):
    """Return ``(state, period)``; ``period`` is ``None`` when the state is not on a known orbit."""
    from . import io
    from .orbits import find_orbit_from_sigma, z2_period_quadrature
    from .spin import SigmaCoords, SpinChain, UnitCell, sigma_point, theta_to_spins, zn_cell

    kind, _, arg = text.partition(":")
    try:
        if kind == "z2":
            return zn_cell(2), z2_period_quadrature()
        if kind == "zn":
            return zn_cell(int(arg)), None
        if kind == "sigma":
            th, ph = _floats(arg)
            c = SigmaCoords(th, ph)
            return sigma_point(c), find_orbit_from_sigma(c, settings, n_samples=2).period
        if kind == "theta":
            return UnitCell(theta_to_spins(_floats(arg))), None
        if kind == "file":
            _, rows = io.read_csv(arg)
            S = np.array([[float(v) for v in r[1:4]] for r in rows])
            return (SpinChain(S) if len(S) >= 3 else UnitCell(S)), None
    except (ValueError, OSError, IndexError) as exc:
        raise ConfigError(f"--init {text!r}: {exc}") from exc
    raise ConfigError(f"--init {text!r}: expected z2, zn:N, sigma:THETA,PHI, theta:... or file:PATH")


def _fname(prefix, eps):
    return f"{prefix}_eps{eps:.6g}.csv"


# ---------------------------------------------------------------------------
# commands; each returns (summary dict, list of task statuses)


def cmd_scan_stability(cfg, out):
    from . import io
    from .orbits import orbit_family_scan, sigma_grid

    thetas, phis = sigma_grid(cfg["n_theta"], cfg["n_phi"])
    table = orbit_family_scan(thetas, phis, _settings(cfg), n_k=cfg["n_k"],
                              workers=cfg["workers"], horizon=cfg["horizon"])
    io.write_orbit_table(out / "orbit_table.csv", table)
    statuses = [r.status for r in table.rows]
    periods = table.array("period")
    summary = {"min_period": None, "min_period_theta_e": None, "min_period_phi_e": None,
               "status_counts": {s: statuses.count(s) for s in sorted(set(statuses))}}
    finite = np.isfinite(periods)
    if finite.any():
        i, j = np.unravel_index(np.argmin(np.where(finite, periods, np.inf)), periods.shape)
        summary.update(min_period=float(periods[i, j]), min_period_theta_e=float(thetas[i]),
                       min_period_phi_e=float(phis[j]))
    failed = ["failed" if s in ("integration-failure", "closure-failed") else "ok" for s in statuses]
    return summary, failed


def cmd_trace_mk(cfg, out):
    from . import io
    from .orbits import PeriodicOrbit
    from .stability import bloch_maps, classify_orbit

    settings = _settings(cfg)
    orbit = parse_orbit(cfg["orbit"], settings)
    v = classify_orbit(orbit, cfg["n_k"], settings)
    maps = bloch_maps(PeriodicOrbit(orbit.n, orbit.cell0, orbit.period), v.ks, settings)
    io.write_trace_curve(out / "trace_mk.csv", v.ks, v.quarter_trace_curve,
                         [m.max_abs_eig for m in maps])
    return {"period": orbit.period, "stable": v.stable, "marginal": v.marginal,
            "k_star": v.k_star, "boundary_type": v.boundary_type,
            "max_abs_quarter_trace": v.max_abs_quarter_trace}, ["ok"]


def cmd_orbit(cfg, out):
    from . import io
    from .dynamics import integrate

    settings = _settings(cfg)
    orbit = parse_orbit(cfg["orbit"], settings)
    traj = integrate(orbit.cell0, orbit.period, settings, n_samples=cfg["n_samples"])
    io.write_trajectory(out / "orbit_trajectory.csv", traj)
    summary = {"n": orbit.n, "period": orbit.period, "omega": orbit.frequency,
               "closure_residual": orbit.closure_residual}
    if orbit.sigma_coords is not None:
        summary["sigma_coords"] = [orbit.sigma_coords.theta_e, orbit.sigma_coords.phi_e]
    ok = orbit.closure_residual < 1e-8
    return summary, ["ok" if ok else "failed"]


def _growth_runs(cfg, out, horizon_of):
    from . import io
    from .fluctuations import growth_series

    settings = _settings(cfg)
    state, period = parse_init(cfg["init"], settings)
    period = period if period is not None else 1.0
    series, statuses = [], []
    for eps in cfg["eps"]:
        s = growth_series(state, eps, cfg["N"], cfg["n_real"], horizon_of(eps, period), period,
                          dt=period / cfg["samples_per_period"], settings=settings,
                          seed=cfg["seed"], workers=cfg["workers"], descriptor=cfg["init"])
        io.write_growth_series(out / _fname("growth", eps), s)
        series.append(s)
        statuses += ["ok"] * s.n_realizations + ["failed"] * s.n_failed
    return series, statuses, period


def cmd_growth(cfg, out):
    series, statuses, period = _growth_runs(cfg, out, lambda eps, T: cfg["periods"] * T)
    return {"period": period, "n_failed": {f"{s.epsilon:.6g}": s.n_failed for s in series}}, statuses


def cmd_collapse(cfg, out):
    from . import io
    from .fluctuations import fit_exponential, scaling_collapse

    if len(set(cfg["eps"])) < 3:
        raise ConfigError("--eps: a collapse needs at least three distinct values")
    series, statuses, period = _growth_runs(cfg, out, lambda eps, T: cfg["x_end"] / eps * T)
    c = scaling_collapse(series)
    io.write_collapse(out / "collapse.csv", c)
    phi0, kappa = fit_exponential(c, cfg["x_min"], cfg["x_max"])
    return {"period": period, "collapse_residual": c.residual,
            "collapse_relative_residual": c.relative_residual, "window": list(c.window),
            "phi0": phi0, "kappa": kappa, "fit_convention": c.convention}, statuses


def cmd_lyapunov(cfg, out):
    from . import io
    from .dynamics import lyapunov_max

    settings = _settings(cfg)
    state, _ = parse_init(cfg["init"], settings)
    lam, err = lyapunov_max(state, cfg["horizon"], cfg["renorm_interval"], settings, cfg["seed"])
    io.write_csv(out / "lyapunov.csv", ["lambda_max", "stderr"], [[lam, err]])
    return {"lambda_max": lam, "stderr": err, "significance": lam / err if err > 0 else None}, ["ok"]


def cmd_near_z2(cfg, out):
    from . import io
    from .stability import fit_quadratic_form, near_z2_landscape

    settings = _settings(cfg)
    rows = []
    fits = {}
    for r in cfg["radii"]:
        ang = 2 * math.pi * np.arange(cfg["n_angles"]) / cfg["n_angles"]
        ring = near_z2_landscape([(r * math.cos(a), r * math.sin(a)) for a in ang], settings)
        fit = fit_quadratic_form(ring)
        fits[f"{r:.6g}"] = {"signature": list(fit.signature), "sign_changes": fit.sign_changes,
                            "form": fit.form.tolist()}
        rows += ring
    io.write_landscape(out / "near_z2.csv", rows)
    return {"rings": fits}, ["ok"]


def cmd_check(cfg, out):
    from . import io
    from .checks import run_checks

    results = run_checks(_settings(cfg), cfg["seed"])
    io.write_csv(out / "check.csv", ["module", "invariant", "residual", "tolerance", "passed"],
                 ([r.module, r.name, r.residual, r.tolerance, r.passed] for r in results))
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  [{r.module}] {r.name}: "
              f"{r.residual:.3e} (tol {r.tolerance:.0e})")
    return {"n_checks": len(results), "n_failed": sum(not r.passed for r in results)}, \
        ["ok" if r.passed else "check-failed" for r in results]


def cmd_export_trajectory(cfg, out):
    from . import io
    from .dynamics import integrate, integrate_theta
    from .spin import UnitCell

    settings = _settings(cfg)
    if cfg["init"].startswith("theta:"):
        traj = integrate_theta(_floats(cfg["init"][6:]), cfg["t_end"], settings,
                               n_samples=cfg["n_samples"])
    else:
        state, _ = parse_init(cfg["init"], settings)
        if cfg["N"] and isinstance(state, UnitCell):
            try:
                state = state.tile(cfg["N"])
            except ValueError as exc:
                raise ConfigError(f"--N: {exc}") from exc
        traj = integrate(state, cfg["t_end"], settings, n_samples=cfg["n_samples"])
    io.write_trajectory(out / "trajectory.csv", traj)
    return {"energy_drift": traj.energy_drift(), "norm_error": traj.norm_error()}, ["ok"]


HANDLERS = {
    "scan-stability": cmd_scan_stability, "trace-mk": cmd_trace_mk, "orbit": cmd_orbit,
    "growth": cmd_growth, "collapse": cmd_collapse, "lyapunov": cmd_lyapunov,
    "near-z2": cmd_near_z2, "check": cmd_check, "export-trajectory": cmd_export_trajectory,
}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pxpc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, (helptext, opts) in COMMANDS.items():
        sp = sub.add_parser(name, help=helptext, description=helptext)
        sp.add_argument("--config", help="TOML file with option values")
        for opt, (_, default, _, h) in {**COMMON, **opts}.items():
            sp.add_argument(f"--{opt.replace('_', '-')}", dest=opt, default=None,
                            help=f"{h} (default: {default})")
    return p


def _manifest(command, cfg, started, statuses, outputs, summary, status, error=None):
    from . import __version__
    from ._accel import BACKEND

    counts = {s: statuses.count(s) for s in sorted(set(statuses))}
    return {
        "command": command,
        "config": cfg,
        "tool_version": __version__,
        "backend": BACKEND,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "wall_time_s": time.time() - started,
        "status": status,
        "error": error,
        "task_status_counts": counts,
        "outputs": outputs,
        "summary": summary,
        "units": UNITS,
    }


def run(command: str, cfg: dict) -> int:
    """Execute ``command`` with a resolved configuration; always writes a manifest."""
    from . import io
    from .dynamics import IntegrationError
    from .orbits import OrbitNotFound

    started = time.time()
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    before = {p.name for p in out.iterdir()}
    summary, statuses, error = {}, [], None
    try:
        summary, statuses = HANDLERS[command](cfg, out)
        failed = sum(s != "ok" for s in statuses)
        if command == "check" and failed:
            status, code = "invariant-check-failed", EXIT_CHECK
        elif failed and failed == len(statuses):
            status, code = "failed", EXIT_FAILED
        elif failed:
            status, code = "partial", EXIT_PARTIAL
        else:
            status, code = "ok", EXIT_OK
    except ConfigError as exc:
        status, code, error = "invalid-config", EXIT_CONFIG, str(exc)
    except (IntegrationError, OrbitNotFound) as exc:
        status, code, error = "failed", EXIT_FAILED, str(exc)
    written = sorted(({p.name for p in out.iterdir()} - before) | {"manifest.json"})
    io.write_json(out / "manifest.json",
                  _manifest(command, cfg, started, statuses, written, summary, status, error))
    if error:
        print(f"pxpc {command}: {error}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        cfg = resolve_config(args.command, flags, args.config)
    except ConfigError as exc:
        print(f"pxpc {args.command}: invalid configuration: {exc}", file=sys.stderr)
        out = flags.get("out") or os.environ.get(OUTPUT_ENV)
        if out:
            from . import io

            Path(out).mkdir(parents=True, exist_ok=True)
            io.write_json(Path(out) / "manifest.json",
                          _manifest(args.command, {k: v for k, v in flags.items() if v is not None},
                                    time.time(), [], ["manifest.json"], {}, "invalid-config",
                                    str(exc)))
        return EXIT_CONFIG
    return run(args.command, cfg)


if __name__ == "__main__":
    sys.exit(main())
