"""Vectorised numpy twins of :mod:`pxpclassical.kernels_nb`.

Same state layout and the same DOPRI5 algorithm; used when numba is
disabled and as an independent cross-check of the compiled path.
"""

import math

import numpy as np

from .kernels_nb import (
    A21, A31, A32, A41, A42, A43, A51, A52, A53, A54, A61, A62, A63, A64, A65,
    B1, B3, B4, B5, B6, E1, E3, E4, E5, E6, E7,
    KIND_CHAIN, KIND_THETA, STATUS_MAX_STEPS, STATUS_NONFINITE, STATUS_OK,
    STATUS_STEP_UNDERFLOW,
)


def _field(S):
    x, z = S[:, 0], S[:, 2]
    wz = 1.0 - z
    hx = -np.roll(wz, 1) * np.roll(wz, -1)
    hz = np.roll(x, 1) * np.roll(wz, 2) + np.roll(x, -1) * np.roll(wz, -2)
    return hx, hz


def chain_rhs(y, out, n):
    S = y.reshape(n, 3)
    hx, hz = _field(S)
    o = out.reshape(n, 3)
    o[:, 0] = -hz * S[:, 1]
    o[:, 1] = hz * S[:, 0] - hx * S[:, 2]
    o[:, 2] = hx * S[:, 1]


def theta_rhs(y, out, n):
    w = 1.0 - np.cos(y)
    out[:] = np.roll(w, 1) * np.roll(w, -1)


def _bloch_roll(D, d, n, kn):
    """Deviation at site ``l + d`` for every ``l``, with the Bloch phase of the cell hop."""
    l = np.arange(n)
    j = l + d
    shift = np.floor_divide(j, n)
    phase = np.exp(1j * kn[:, None] * shift[None, :])  # (nk, n)
    return D[:, :, j % n, :] * phase[:, None, :, None]


def tangent_rhs(y, out, n, nk, m, ks):
    chain_rhs(y[: 3 * n], out[: 3 * n], n)
    S = y[: 3 * n].reshape(n, 3)
    nt = nk * m * n * 3
    D = (y[3 * n: 3 * n + nt] + 1j * y[3 * n + nt:]).reshape(nk, m, n, 3)
    hx, hz = _field(S)
    kn = np.asarray(ks) * n
    x, z = S[:, 0], S[:, 2]
    wz = 1.0 - z
    Dm2, Dm1 = _bloch_roll(D, -2, n, kn), _bloch_roll(D, -1, n, kn)
    Dp1, Dp2 = _bloch_roll(D, 1, n, kn), _bloch_roll(D, 2, n, kn)
    dhx = Dm1[..., 2] * np.roll(wz, -1) + np.roll(wz, 1) * Dp1[..., 2]
    dhz = (Dm1[..., 0] * np.roll(wz, 2) - np.roll(x, 1) * Dm2[..., 2]
           + Dp1[..., 0] * np.roll(wz, -2) - np.roll(x, -1) * Dp2[..., 2])
    dD = np.empty_like(D)
    dD[..., 0] = -dhz * S[:, 1] - hz * D[..., 1]
    dD[..., 1] = dhz * S[:, 0] - dhx * S[:, 2] + hz * D[..., 0] - hx * D[..., 2]
    dD[..., 2] = dhx * S[:, 1] + hx * D[..., 1]
    out[3 * n: 3 * n + nt] = dD.real.ravel()
    out[3 * n + nt:] = dD.imag.ravel()


def rhs(kind, y, out, iparams, fparams, tdir=1.0):
    if kind == KIND_CHAIN:
        chain_rhs(y, out, iparams[0])
    elif kind == KIND_THETA:
        theta_rhs(y, out, iparams[0])
    else:
        tangent_rhs(y, out, iparams[0], iparams[1], iparams[2], fparams)
    if tdir != 1.0:
        out *= tdir


def normalize_spins(y, n):
    S = y[: 3 * n].reshape(n, 3)
    r = np.sqrt(np.sum(S * S, axis=1))
    S /= r[:, None]
    return float(np.sum(np.abs(r - 1.0)))


def solve(kind, y0, t0, t_eval, iparams, fparams, rtol, atol, max_step, h0, max_steps,
          tdir=1.0, renorm_every=1):
    ny = y0.size
    nout = t_eval.size
    Y = np.full((nout, ny), np.nan)
    y = y0.copy()
    k = [np.empty(ny) for _ in range(7)]
    renorm = kind != KIND_THETA and renorm_every > 0
    # angles only matter mod 2 pi, so their error scale stops growing there
    cap = 2.0 * math.pi if kind == KIND_THETA else math.inf
    nspin = int(iparams[0])
    renorm_total = 0.0
    t = t0
    rhs(kind, y, k[0], iparams, fparams, tdir)
    h = h0
    if h <= 0.0:
        sc = atol + rtol * np.abs(y)
        d0 = math.sqrt(np.mean((y / sc) ** 2))
        d1 = math.sqrt(np.mean((k[0] / sc) ** 2))
        h = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
        h = min(h, max_step)
    n_acc = n_tot = 0
    status = STATUS_OK
    idx = 0
    while idx < nout and t_eval[idx] <= t:
        Y[idx] = y
        idx += 1
    while idx < nout:
        target = t_eval[idx]
        hit = False
        hs = min(h, max_step)
        if t + hs >= target - 1e-14 * max(1.0, abs(target)):
            hs = target - t
            hit = True
        if hs < 1e-13 * max(1.0, abs(t)):
            if hit:
                t = target
                Y[idx] = y
                idx += 1
                continue
            status = STATUS_STEP_UNDERFLOW
            break
        if n_tot >= max_steps:
            status = STATUS_MAX_STEPS
            break
        n_tot += 1
        k1 = k[0]
        rhs(kind, y + hs * A21 * k1, k[1], iparams, fparams, tdir)
        rhs(kind, y + hs * (A31 * k1 + A32 * k[1]), k[2], iparams, fparams, tdir)
        rhs(kind, y + hs * (A41 * k1 + A42 * k[1] + A43 * k[2]), k[3], iparams, fparams, tdir)
        rhs(kind, y + hs * (A51 * k1 + A52 * k[1] + A53 * k[2] + A54 * k[3]),
            k[4], iparams, fparams, tdir)
        rhs(kind, y + hs * (A61 * k1 + A62 * k[1] + A63 * k[2] + A64 * k[3] + A65 * k[4]),
            k[5], iparams, fparams, tdir)
        ynew = y + hs * (B1 * k1 + B3 * k[2] + B4 * k[3] + B5 * k[4] + B6 * k[5])
        rhs(kind, ynew, k[6], iparams, fparams, tdir)
        err = hs * (E1 * k1 + E3 * k[2] + E4 * k[3] + E5 * k[4] + E6 * k[5] + E7 * k[6])
        sc = atol + rtol * np.minimum(np.maximum(np.abs(y), np.abs(ynew)), cap)
        en = float(np.max(np.abs(err) / sc))
        if not math.isfinite(en):
            status = STATUS_NONFINITE
            break
        if en <= 1.0:
            t = target if hit else t + hs
            y = ynew
            n_acc += 1
            if renorm and n_acc % renorm_every == 0:
                renorm_total += normalize_spins(y, nspin)
                rhs(kind, y, k[0], iparams, fparams, tdir)
            else:
                k[0], k[6] = k[6], k[0]
            fac = 5.0 if en == 0.0 else min(5.0, max(0.2, 0.9 * en ** -0.2))
            if not hit or fac < 1.0:
                h = hs * fac
            if hit:
                Y[idx] = y
                idx += 1
        else:
            h = hs * max(0.2, 0.9 * en ** -0.2)
    return Y, status, n_acc, t, y, renorm_total, h
