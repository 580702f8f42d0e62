# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for the standard map.

Every function here has a numpy twin in ``_fallback.py`` with the same
signature; ``rotorecho.kernels`` picks one at import time.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, log, sqrt, floor, M_PI, isfinite

cnp.import_array()

cdef double TWO_PI = 2.0 * M_PI


def iterate_cloud(double[::1] x, double[::1] p, double K, long steps, bint inverse=False):
    """Advance lifted points ``steps`` times in place (or invert the map)."""
    cdef Py_ssize_t i, n = x.shape[0]
    cdef long j
    cdef double c = K / TWO_PI, xi, pi_
    for i in range(n):
        xi = x[i]
        pi_ = p[i]
        if inverse:
            for j in range(steps):
                xi = xi - pi_
                pi_ = pi_ + c * sin(TWO_PI * xi)
        else:
            for j in range(steps):
                pi_ = pi_ - c * sin(TWO_PI * xi)
                xi = xi + pi_
        x[i] = xi
        p[i] = pi_


def echo_cloud(double[::1] x, double[::1] p, double K_fwd, double K_bwd, long steps):
    """Forward ``steps`` at ``K_fwd`` then exact inverse ``steps`` at ``K_bwd``, in place."""
    cdef Py_ssize_t i, n = x.shape[0]
    cdef long j
    cdef double cf = K_fwd / TWO_PI, cb = K_bwd / TWO_PI, xi, pi_
    for i in range(n):
        xi = x[i]
        pi_ = p[i]
        for j in range(steps):
            pi_ = pi_ - cf * sin(TWO_PI * xi)
            xi = xi + pi_
        for j in range(steps):
            xi = xi - pi_
            pi_ = pi_ + cb * sin(TWO_PI * xi)
        x[i] = xi
        p[i] = pi_


def action_sums(double[::1] x, double[::1] p, double K, long steps):
    """Advance in place and return per-point (generating-function sum, cosine sum).

    The cosine sum runs over the kicked positions x_0 .. x_{steps-1}.
    """
    cdef Py_ssize_t i, n = x.shape[0]
    cdef long j
    cdef double c = K / TWO_PI, a = K / (4.0 * M_PI * M_PI)
    cdef double xi, pi_, xn, cs, s, f
    gen = np.zeros(n)
    csum = np.zeros(n)
    cdef double[::1] g = gen
    cdef double[::1] cc = csum
    for i in range(n):
        xi = x[i]
        pi_ = p[i]
        s = 0.0
        f = 0.0
        for j in range(steps):
            cs = cos(TWO_PI * xi)
            pi_ = pi_ - c * sin(TWO_PI * xi)
            xn = xi + pi_
            f += 0.5 * (xn - xi) * (xn - xi) + a * cs
            s += cs
            xi = xn
        x[i] = xi
        p[i] = pi_
        g[i] = f
        cc[i] = s
    return gen, csum


def tangent_log_growth(double[::1] x, double[::1] p, double[::1] vx, double[::1] vp,
                       double K, long steps):
    """Sum of log tangent-vector growth with renormalization every step.

    Returns an array of per-sample sums; NaN marks a degenerate sample
    (tangent vector collapsed to zero or overflowed).
    """
    cdef Py_ssize_t i, n = x.shape[0]
    cdef long j
    cdef double c = K / TWO_PI, kk = K
    cdef double xi, pi_, a, b, na, nb, dp, norm, acc
    out = np.empty(n)
    cdef double[::1] o = out
    for i in range(n):
        xi = x[i]
        pi_ = p[i]
        a = vx[i]
        b = vp[i]
        acc = 0.0
        for j in range(steps):
            dp = -kk * cos(TWO_PI * xi)
            nb = dp * a + b
            na = a + nb
            pi_ = pi_ - c * sin(TWO_PI * xi)
            xi = xi + pi_
            norm = sqrt(na * na + nb * nb)
            if norm == 0.0 or not isfinite(norm):
                acc = float("nan")
                break
            acc += log(norm)
            a = na / norm
            b = nb / norm
        o[i] = acc
        x[i] = xi
        p[i] = pi_
    return out


cdef inline long _cell(double v, double h, long nc):
    cdef long c = <long>floor(v / h)
    c = c % nc
    if c < 0:
        c += nc
    return c


def polyline_crossings(double[::1] ax, double[::1] ap, double[::1] adx, double[::1] adp,
                       double[::1] bx, double[::1] bp, double[::1] bdx, double[::1] bdp,
                       long ncell):
    """Crossings between two sets of short segments on the unit torus.

    Segment k of set A starts at (ax, ap) (wrapped to [0,1)) with displacement
    (adx, adp); likewise for B.  Segments must be shorter than 1/ncell.

    Returns (i, j, s, r, shift_x, shift_p): A-segment index, B-segment index,
    fractional positions along each, and the integer lattice shift that was
    added to B's start to bring it next to A's start.
    """
    cdef double h = 1.0 / ncell
    cdef Py_ssize_t na = ax.shape[0], nb = bx.shape[0], k, q
    cdef long ncells = ncell * ncell
    cdef long cx0, cx1, cp0, cp1, cx, cp, cid, m
    # bucket B segments by every cell their bounding box touches
    counts = np.zeros(ncells + 1, dtype=np.int64)
    cdef long[::1] cnt = counts
    cdef double x1, p1
    for k in range(nb):
        x1 = bx[k] + bdx[k]
        p1 = bp[k] + bdp[k]
        cx0 = <long>floor(min(bx[k], x1) / h)
        cx1 = <long>floor(max(bx[k], x1) / h)
        cp0 = <long>floor(min(bp[k], p1) / h)
        cp1 = <long>floor(max(bp[k], p1) / h)
        for cx in range(cx0, cx1 + 1):
            for cp in range(cp0, cp1 + 1):
                cid = (((cx % ncell) + ncell) % ncell) * ncell + (((cp % ncell) + ncell) % ncell)
                cnt[cid + 1] += 1
    for cid in range(ncells):
        cnt[cid + 1] += cnt[cid]
    fill = counts[:-1].copy()
    cdef long[::1] fl = fill
    members = np.empty(cnt[ncells], dtype=np.int64)
    cdef long[::1] mem = members
    for k in range(nb):
        x1 = bx[k] + bdx[k]
        p1 = bp[k] + bdp[k]
        cx0 = <long>floor(min(bx[k], x1) / h)
        cx1 = <long>floor(max(bx[k], x1) / h)
        cp0 = <long>floor(min(bp[k], p1) / h)
        cp1 = <long>floor(max(bp[k], p1) / h)
        for cx in range(cx0, cx1 + 1):
            for cp in range(cp0, cp1 + 1):
                cid = (((cx % ncell) + ncell) % ncell) * ncell + (((cp % ncell) + ncell) % ncell)
                mem[fl[cid]] = k
                fl[cid] += 1

    out_i = []
    out_j = []
    out_s = []
    out_r = []
    out_sx = []
    out_sp = []
    cdef double sx, sp, qx, qp, den, s, r, ix, ipp, ex, ep
    cdef long lx, lp
    for k in range(na):
        x1 = ax[k] + adx[k]
        p1 = ap[k] + adp[k]
        cx0 = <long>floor(min(ax[k], x1) / h)
        cx1 = <long>floor(max(ax[k], x1) / h)
        cp0 = <long>floor(min(ap[k], p1) / h)
        cp1 = <long>floor(max(ap[k], p1) / h)
        for cx in range(cx0, cx1 + 1):
            for cp in range(cp0, cp1 + 1):
                cid = (((cx % ncell) + ncell) % ncell) * ncell + (((cp % ncell) + ncell) % ncell)
                for m in range(cnt[cid], cnt[cid + 1]):
                    q = mem[m]
                    lx = <long>floor(ax[k] - bx[q] + 0.5)
                    lp = <long>floor(ap[k] - bp[q] + 0.5)
                    sx = bx[q] + lx
                    sp = bp[q] + lp
                    den = adx[k] * bdp[q] - adp[k] * bdx[q]
                    if den == 0.0:
                        continue
                    qx = sx - ax[k]
                    qp = sp - ap[k]
                    s = (qx * bdp[q] - qp * bdx[q]) / den
                    r = (qx * adp[k] - qp * adx[k]) / den
                    if s < 0.0 or s >= 1.0 or r < 0.0 or r >= 1.0:
                        continue
                    # report once: only from the cell holding the crossing
                    ix = ax[k] + s * adx[k]
                    ipp = ap[k] + s * adp[k]
                    if _cell(ix, h, ncell) != ((cx % ncell) + ncell) % ncell:
                        continue
                    if _cell(ipp, h, ncell) != ((cp % ncell) + ncell) % ncell:
                        continue
                    out_i.append(k)
                    out_j.append(q)
                    out_s.append(s)
                    out_r.append(r)
                    out_sx.append(lx)
                    out_sp.append(lp)
    return (np.asarray(out_i, dtype=np.int64), np.asarray(out_j, dtype=np.int64),
            np.asarray(out_s, dtype=float), np.asarray(out_r, dtype=float),
            np.asarray(out_sx, dtype=np.int64), np.asarray(out_sp, dtype=np.int64))
