"""Compiled inner loops (numba)."""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def hs_relax(ix, iy, it, u0, v0, alpha, iterations):
    """Jacobi relaxation of linearised Horn-Schunck around ``(u0, v0)``.

    All arrays are ``(N, H, W)``; the neighbourhood average uses edge
    replication with weights 1/6 (4-neighbours) and 1/12 (diagonals).
    """
    n, h, w = ix.shape
    u = u0.copy()
    v = v0.copy()
    ub = np.empty_like(u)
    vb = np.empty_like(v)
    a2 = alpha * alpha
    for _ in range(iterations):
        for b in range(n):
            for y in range(h):
                ym = y - 1 if y > 0 else 0
                yp = y + 1 if y < h - 1 else h - 1
                for x in range(w):
                    xm = x - 1 if x > 0 else 0
                    xp = x + 1 if x < w - 1 else w - 1
                    ub[b, y, x] = ((u[b, ym, x] + u[b, yp, x] + u[b, y, xm] + u[b, y, xp]) / 6.0
                                   + (u[b, ym, xm] + u[b, ym, xp] + u[b, yp, xm] + u[b, yp, xp]) / 12.0)
                    vb[b, y, x] = ((v[b, ym, x] + v[b, yp, x] + v[b, y, xm] + v[b, y, xp]) / 6.0
                                   + (v[b, ym, xm] + v[b, ym, xp] + v[b, yp, xm] + v[b, yp, xp]) / 12.0)
        for b in range(n):
            for y in range(h):
                for x in range(w):
                    gx = ix[b, y, x]
                    gy = iy[b, y, x]
                    d = (gx * (ub[b, y, x] - u0[b, y, x]) + gy * (vb[b, y, x] - v0[b, y, x]) + it[b, y, x]) \
                        / (a2 + gx * gx + gy * gy)
                    u[b, y, x] = ub[b, y, x] - gx * d
                    v[b, y, x] = vb[b, y, x] - gy * d
    return u, v


@njit(cache=True)
def pegasos_epochs(X, y, sw, order, w, t0, lam, lr_offset):
    """Weighted hinge-loss SGD steps over ``order``; updates ``w`` in place.

    Step ``t`` uses learning rate ``1 / (lam * (t + lr_offset))``.  Returns
    the last step index so a later call can continue the schedule.
    """
    d = X.shape[1]
    t = t0
    for k in range(order.shape[0]):
        i = order[k]
        t += 1
        eta = 1.0 / (lam * (t + lr_offset))
        m = 0.0
        for j in range(d):
            m += w[j] * X[i, j]
        shrink = 1.0 - eta * lam
        if y[i] * m < 1.0:
            g = eta * sw[i] * y[i]
            for j in range(d):
                w[j] = shrink * w[j] + g * X[i, j]
        else:
            for j in range(d):
                w[j] = shrink * w[j]
    return t


@njit(cache=True)
def orientation_scatter(dx, dy, w, nbins, out):
    """Bilinear signed-orientation votes of flat ``dx, dy, w`` into ``out`` ``(nbins, n)``."""
    two_pi = 2.0 * np.pi
    for i in range(dx.shape[0]):
        a = np.arctan2(dy[i], dx[i]) % two_pi
        pos = a * (nbins / two_pi)
        lo = np.floor(pos)
        frac = pos - lo
        k = int(lo) % nbins
        out[k, i] += w[i] * (1.0 - frac)
        out[(k + 1) % nbins, i] += w[i] * frac
