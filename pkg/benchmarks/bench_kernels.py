"""Time the numba and numpy integration kernels on the same problems.

    python benchmarks/bench_kernels.py [--repeat 3]

The numba timings exclude compilation (one warm-up call per problem).
Both backends must agree to integration accuracy; the largest difference
is printed next to the timings.
"""

import argparse
import math
import time

import numpy as np

from pxpclassical.dynamics import DEFAULT_SETTINGS, tangent_frame
from pxpclassical.kernels import KIND_CHAIN, KIND_TANGENT, KIND_THETA, get_backend
from pxpclassical.spin import normalize, zn_cell


def _problems():
    rng = np.random.default_rng(1)
    chain = normalize(rng.standard_normal((100, 3)))
    yield "chain N=100, t=20", KIND_CHAIN, chain.ravel(), 20.0, [100, 0, 0], []
    th = rng.uniform(0, 2 * math.pi, 12)
    yield "theta n=12, t=50", KIND_THETA, th, 50.0, [12, 0, 0], []
    S = zn_cell(2).spins
    e1, e2 = tangent_frame(S)
    ks = np.linspace(0.0, 0.5 * math.pi, 64)
    vec = np.stack([e1, e2, e1 * [[1], [0]], e2 * [[0], [1]]])  # (m, n, 3)
    D = np.broadcast_to(vec, (ks.size,) + vec.shape).astype(complex)
    y0 = np.concatenate([S.ravel(), D.real.ravel(), D.imag.ravel()])
    yield "tangent n=2, 64 k, 4 vectors, t=T", KIND_TANGENT, y0, 2.5714762439159, [2, 64, 4], ks


def _solve(mod, kind, y0, t_end, ip, fp):
    s = DEFAULT_SETTINGS
    return mod.solve(kind, np.ascontiguousarray(y0, dtype=float), 0.0, np.array([t_end]),
                     np.asarray(ip, dtype=np.int64), np.asarray(fp, dtype=float),
                     s.rtol, s.atol, s.max_step, 0.0, int(s.max_steps), 1.0,
                     int(s.renormalize_every))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    nb, npk = get_backend("numba"), get_backend("numpy")
    print(f"{'problem':38s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s} {'max diff':>10s}")
    for name, kind, y0, t_end, ip, fp in _problems():
        _solve(nb, kind, y0, t_end, ip, fp)  # compile
        timings = {}
        finals = {}
        for label, mod in (("numba", nb), ("numpy", npk)):
            best = math.inf
            for _ in range(args.repeat if label == "numba" else 1):
                t0 = time.perf_counter()
                out = _solve(mod, kind, y0, t_end, ip, fp)
                best = min(best, time.perf_counter() - t0)
            timings[label] = best
            finals[label] = out[0][-1]
        diff = float(np.max(np.abs(finals["numba"] - finals["numpy"])))
        print(f"{name:38s} {timings['numba']:10.4f} {timings['numpy']:10.4f} "
              f"{timings['numpy'] / timings['numba']:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
