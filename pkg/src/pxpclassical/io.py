"""CSV and JSON artifact writers.

CSV dialect: comma separated, header row, LF endings, reals with 17
significant digits so values round-trip exactly.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if math.isnan(f):
            return "nan"
        return f"{f:.17g}"
    return str(v)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, ensure_ascii=False, default=_json_default)
        fh.write("\n")
    return path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


# ---------------------------------------------------------------------------
# schemas


def write_chain(path, chain):
    S = np.asarray(getattr(chain, "spins", chain))
    return write_csv(path, ["site_index", "sx", "sy", "sz"],
                     ([i, *S[i]] for i in range(S.shape[0])))


def write_trajectory(path, traj):
    if traj.kind == "theta":
        n = traj.states.shape[1]
        header = ["t"] + [f"theta_{i + 1}" for i in range(n)]
        return write_csv(path, header, ([t, *y] for t, y in zip(traj.times, traj.states)))
    rows = ([t, i, *S[i]] for t, S in zip(traj.times, traj.states) for i in range(S.shape[0]))
    return write_csv(path, ["t", "site", "sx", "sy", "sz"], rows)


ORBIT_TABLE_HEADER = ["theta_e", "phi_e", "period", "stable", "max_abs_quarter_trace",
                      "boundary_type", "status"]


def write_orbit_table(path, table):
    rows = ([r.theta_e, r.phi_e, r.period, r.stable, r.max_abs_quarter_trace, r.boundary_type,
             r.status] for r in table.rows)
    return write_csv(path, ORBIT_TABLE_HEADER, rows)


def write_trace_curve(path, ks, quarter_trace, max_abs_eig):
    return write_csv(path, ["k", "quarter_trace", "max_abs_eig"],
                     zip(ks, quarter_trace, max_abs_eig))


def write_growth_series(path, s):
    rows = ([t, t / s.period, m, e, s.n_realizations, s.epsilon]
            for t, m, e in zip(s.times, s.mean_ratio, s.stderr))
    return write_csv(path, ["t", "t_over_T", "mean_ratio", "stderr", "n_real", "epsilon"], rows)


def write_collapse(path, collapse):
    # ``samples`` holds (x, phi, eps, ...) per series; flatten with the series epsilon
    rows = ([xi, pi, s[2]] for s in collapse.samples for xi, pi in zip(s[0], s[1]))
    return write_csv(path, ["x", "phi", "epsilon"], rows)


def write_landscape(path, rows):
    return write_csv(path, ["d_theta", "d_phi", "r", "s", "r_err", "max_eig_dev"],
                     ([r.d_theta, r.d_phi, r.r, r.s, r.r_err, r.max_eig_dev] for r in rows))
