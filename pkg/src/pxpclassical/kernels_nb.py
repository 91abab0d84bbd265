"""Loop-style kernels compiled with numba.

State layout shared with :mod:`pxpclassical.kernels_np`:

* ``KIND_CHAIN``: ``y = S.ravel()`` with ``S`` of shape ``(n, 3)``, periodic.
* ``KIND_THETA``: ``y = theta`` of shape ``(n,)`` (x = 0 sector).
* ``KIND_TANGENT``: ``y = [S.ravel(), Re(D).ravel(), Im(D).ravel()]`` where
  ``D`` has shape ``(nk, m, n, 3)``: ``m`` Bloch tangent vectors for each of
  ``nk`` wavevectors ``ks`` (per-site units, cell phase ``exp(i k n)``).

``iparams = [n, nk, m]`` and ``fparams = ks``.
"""

import math

import numpy as np

from ._accel import njit

KIND_CHAIN = 0
KIND_THETA = 1
KIND_TANGENT = 2

STATUS_OK = 0
STATUS_STEP_UNDERFLOW = 1
STATUS_MAX_STEPS = 2
STATUS_NONFINITE = 3

# Dormand-Prince 5(4) tableau
C2, C3, C4, C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = (
    9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0)
B1, B3, B4, B5, B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
E1, E3, E4, E5, E6, E7 = (
    71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)


@njit
def chain_rhs(y, out, n):
    for i in range(n):
        im1 = (i - 1) % n
        ip1 = (i + 1) % n
        im2 = (i - 2) % n
        ip2 = (i + 2) % n
        sx = y[3 * i]
        sy = y[3 * i + 1]
        sz = y[3 * i + 2]
        hx = -(1.0 - y[3 * im1 + 2]) * (1.0 - y[3 * ip1 + 2])
        hz = y[3 * im1] * (1.0 - y[3 * im2 + 2]) + y[3 * ip1] * (1.0 - y[3 * ip2 + 2])
        out[3 * i] = -hz * sy
        out[3 * i + 1] = hz * sx - hx * sz
        out[3 * i + 2] = hx * sy


@njit
def theta_rhs(y, out, n):
    for i in range(n):
        out[i] = (1.0 - math.cos(y[(i - 1) % n])) * (1.0 - math.cos(y[(i + 1) % n]))


@njit
def tangent_rhs(y, out, n, nk, m, ks):
    chain_rhs(y, out, n)
    nt = nk * m * n * 3
    base_re = 3 * n
    base_im = 3 * n + nt
    # neighbour index and cell shift for offsets d = -2..2
    nbr = np.empty((n, 5), dtype=np.int64)
    shift = np.empty((n, 5), dtype=np.int64)
    for l in range(n):
        for d in range(-2, 3):
            j = l + d
            nbr[l, d + 2] = j % n
            shift[l, d + 2] = (j - (j % n)) // n
    hxs = np.empty(n)
    hzs = np.empty(n)
    for l in range(n):
        hxs[l] = -(1.0 - y[3 * nbr[l, 1] + 2]) * (1.0 - y[3 * nbr[l, 3] + 2])
        hzs[l] = (y[3 * nbr[l, 1]] * (1.0 - y[3 * nbr[l, 0] + 2])
                  + y[3 * nbr[l, 3]] * (1.0 - y[3 * nbr[l, 4] + 2]))
    for q in range(nk):
        kn = ks[q] * n
        for l in range(n):
            # phases for the five neighbour offsets
            pr0 = math.cos(kn * shift[l, 0])
            pi0 = math.sin(kn * shift[l, 0])
            pr1 = math.cos(kn * shift[l, 1])
            pi1 = math.sin(kn * shift[l, 1])
            pr3 = math.cos(kn * shift[l, 3])
            pi3 = math.sin(kn * shift[l, 3])
            pr4 = math.cos(kn * shift[l, 4])
            pi4 = math.sin(kn * shift[l, 4])
            jm2 = nbr[l, 0]
            jm1 = nbr[l, 1]
            jp1 = nbr[l, 3]
            jp2 = nbr[l, 4]
            sx = y[3 * l]
            sy = y[3 * l + 1]
            sz = y[3 * l + 2]
            xm1 = y[3 * jm1]
            xp1 = y[3 * jp1]
            wzm1 = 1.0 - y[3 * jm1 + 2]
            wzp1 = 1.0 - y[3 * jp1 + 2]
            wzm2 = 1.0 - y[3 * jm2 + 2]
            wzp2 = 1.0 - y[3 * jp2 + 2]
            hx = hxs[l]
            hz = hzs[l]
            for a in range(m):
                off = ((q * m + a) * n) * 3
                # real and imaginary parts of phased neighbour deviations
                r = base_re + off
                s = base_im + off
                dzm1r = pr1 * y[r + 3 * jm1 + 2] - pi1 * y[s + 3 * jm1 + 2]
                dzm1i = pr1 * y[s + 3 * jm1 + 2] + pi1 * y[r + 3 * jm1 + 2]
                dzp1r = pr3 * y[r + 3 * jp1 + 2] - pi3 * y[s + 3 * jp1 + 2]
                dzp1i = pr3 * y[s + 3 * jp1 + 2] + pi3 * y[r + 3 * jp1 + 2]
                dxm1r = pr1 * y[r + 3 * jm1] - pi1 * y[s + 3 * jm1]
                dxm1i = pr1 * y[s + 3 * jm1] + pi1 * y[r + 3 * jm1]
                dxp1r = pr3 * y[r + 3 * jp1] - pi3 * y[s + 3 * jp1]
                dxp1i = pr3 * y[s + 3 * jp1] + pi3 * y[r + 3 * jp1]
                dzm2r = pr0 * y[r + 3 * jm2 + 2] - pi0 * y[s + 3 * jm2 + 2]
                dzm2i = pr0 * y[s + 3 * jm2 + 2] + pi0 * y[r + 3 * jm2 + 2]
                dzp2r = pr4 * y[r + 3 * jp2 + 2] - pi4 * y[s + 3 * jp2 + 2]
                dzp2i = pr4 * y[s + 3 * jp2 + 2] + pi4 * y[r + 3 * jp2 + 2]
                dhxr = dzm1r * wzp1 + wzm1 * dzp1r
                dhxi = dzm1i * wzp1 + wzm1 * dzp1i
                dhzr = dxm1r * wzm2 - xm1 * dzm2r + dxp1r * wzp2 - xp1 * dzp2r
                dhzi = dxm1i * wzm2 - xm1 * dzm2i + dxp1i * wzp2 - xp1 * dzp2i
                ir = r + 3 * l
                ii = s + 3 * l
                dxr = y[ir]
                dyr = y[ir + 1]
                dzr = y[ir + 2]
                dxi = y[ii]
                dyi = y[ii + 1]
                dzi = y[ii + 2]
                # dh x S + h x dS with h_y = dh_y = 0
                out[ir] = -dhzr * sy - hz * dyr
                out[ir + 1] = dhzr * sx - dhxr * sz + hz * dxr - hx * dzr
                out[ir + 2] = dhxr * sy + hx * dyr
                out[ii] = -dhzi * sy - hz * dyi
                out[ii + 1] = dhzi * sx - dhxi * sz + hz * dxi - hx * dzi
                out[ii + 2] = dhxi * sy + hx * dyi


@njit
def rhs(kind, y, out, iparams, fparams, tdir=1.0):
    if kind == KIND_CHAIN:
        chain_rhs(y, out, iparams[0])
    elif kind == KIND_THETA:
        theta_rhs(y, out, iparams[0])
    else:
        tangent_rhs(y, out, iparams[0], iparams[1], iparams[2], fparams)
    if tdir != 1.0:
        for j in range(out.size):
            out[j] *= tdir


@njit
def normalize_spins(y, n):
    total = 0.0
    for i in range(n):
        r = math.sqrt(y[3 * i] ** 2 + y[3 * i + 1] ** 2 + y[3 * i + 2] ** 2)
        total += abs(r - 1.0)
        y[3 * i] /= r
        y[3 * i + 1] /= r
        y[3 * i + 2] /= r
    return total


@njit
def _error_norm(y, ynew, err, rtol, atol, cap):
    # max norm: every component individually meets rtol/atol
    acc = 0.0
    for j in range(y.size):
        sc = atol + rtol * min(max(abs(y[j]), abs(ynew[j])), cap)
        r = abs(err[j]) / sc
        if r > acc or r != r:
            acc = r
    return acc


@njit
def solve(kind, y0, t0, t_eval, iparams, fparams, rtol, atol, max_step, h0, max_steps,
          tdir=1.0, renorm_every=1):
    """Adaptive DOPRI5 from ``t0`` landing exactly on every ``t_eval`` time.

    Returns ``(Y, status, n_accepted, t_last, y_last, renorm_total, h_last)``;
    rows of ``Y`` past a failure are left as NaN.
    """
    ny = y0.size
    nout = t_eval.size
    Y = np.full((nout, ny), np.nan)
    y = y0.copy()
    ynew = np.empty(ny)
    ytmp = np.empty(ny)
    err = np.empty(ny)
    k1 = np.empty(ny)
    k2 = np.empty(ny)
    k3 = np.empty(ny)
    k4 = np.empty(ny)
    k5 = np.empty(ny)
    k6 = np.empty(ny)
    k7 = np.empty(ny)
    renorm = kind != KIND_THETA and renorm_every > 0
    # angles only matter mod 2 pi, so their error scale stops growing there
    cap = 2.0 * math.pi if kind == KIND_THETA else math.inf
    nspin = iparams[0]
    renorm_total = 0.0
    t = t0
    rhs(kind, y, k1, iparams, fparams, tdir)
    h = h0
    if h <= 0.0:
        d0 = 0.0
        d1 = 0.0
        for j in range(ny):
            sc = atol + rtol * abs(y[j])
            d0 += (y[j] / sc) ** 2
            d1 += (k1[j] / sc) ** 2
        d0 = math.sqrt(d0 / ny)
        d1 = math.sqrt(d1 / ny)
        h = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
        h = min(h, max_step)
    n_acc = 0
    n_tot = 0
    status = STATUS_OK
    idx = 0
    while idx < nout and t_eval[idx] <= t:
        for j in range(ny):
            Y[idx, j] = y[j]
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
                for j in range(ny):
                    Y[idx, j] = y[j]
                idx += 1
                continue
            status = STATUS_STEP_UNDERFLOW
            break
        if n_tot >= max_steps:
            status = STATUS_MAX_STEPS
            break
        n_tot += 1
        for j in range(ny):
            ytmp[j] = y[j] + hs * A21 * k1[j]
        rhs(kind, ytmp, k2, iparams, fparams, tdir)
        for j in range(ny):
            ytmp[j] = y[j] + hs * (A31 * k1[j] + A32 * k2[j])
        rhs(kind, ytmp, k3, iparams, fparams, tdir)
        for j in range(ny):
            ytmp[j] = y[j] + hs * (A41 * k1[j] + A42 * k2[j] + A43 * k3[j])
        rhs(kind, ytmp, k4, iparams, fparams, tdir)
        for j in range(ny):
            ytmp[j] = y[j] + hs * (A51 * k1[j] + A52 * k2[j] + A53 * k3[j] + A54 * k4[j])
        rhs(kind, ytmp, k5, iparams, fparams, tdir)
        for j in range(ny):
            ytmp[j] = y[j] + hs * (A61 * k1[j] + A62 * k2[j] + A63 * k3[j]
                                   + A64 * k4[j] + A65 * k5[j])
        rhs(kind, ytmp, k6, iparams, fparams, tdir)
        for j in range(ny):
            ynew[j] = y[j] + hs * (B1 * k1[j] + B3 * k3[j] + B4 * k4[j]
                                   + B5 * k5[j] + B6 * k6[j])
        rhs(kind, ynew, k7, iparams, fparams, tdir)
        for j in range(ny):
            err[j] = hs * (E1 * k1[j] + E3 * k3[j] + E4 * k4[j] + E5 * k5[j]
                           + E6 * k6[j] + E7 * k7[j])
        en = _error_norm(y, ynew, err, rtol, atol, cap)
        if not math.isfinite(en):
            status = STATUS_NONFINITE
            break
        if en <= 1.0:
            t = target if hit else t + hs
            for j in range(ny):
                y[j] = ynew[j]
            n_acc += 1
            if renorm and n_acc % renorm_every == 0:
                renorm_total += normalize_spins(y, nspin)
                rhs(kind, y, k1, iparams, fparams, tdir)
            else:
                for j in range(ny):
                    k1[j] = k7[j]
            fac = 5.0 if en == 0.0 else min(5.0, max(0.2, 0.9 * en ** -0.2))
            if not hit or fac < 1.0:
                h = hs * fac
            if hit:
                for j in range(ny):
                    Y[idx, j] = y[j]
                idx += 1
        else:
            h = hs * max(0.2, 0.9 * en ** -0.2)
    return Y, status, n_acc, t, y, renorm_total, h
