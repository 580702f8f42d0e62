"""Pure-numpy implementations of the inner loops in ``_kernels.pyx``.

Same signatures and semantics as the compiled versions; vectorized over
points rather than looped.
"""
import numpy as np

TWO_PI = 2.0 * np.pi


def iterate_cloud(x, p, K, steps, inverse=False):
    c = K / TWO_PI
    xi = np.array(x, dtype=float)
    pi_ = np.array(p, dtype=float)
    if inverse:
        for _ in range(steps):
            xi = xi - pi_
            pi_ = pi_ + c * np.sin(TWO_PI * xi)
    else:
        for _ in range(steps):
            pi_ = pi_ - c * np.sin(TWO_PI * xi)
            xi = xi + pi_
    x[:] = xi
    p[:] = pi_


def echo_cloud(x, p, K_fwd, K_bwd, steps):
    iterate_cloud(x, p, K_fwd, steps)
    iterate_cloud(x, p, K_bwd, steps, inverse=True)


def action_sums(x, p, K, steps):
    c = K / TWO_PI
    a = K / (4.0 * np.pi**2)
    xi = np.array(x, dtype=float)
    pi_ = np.array(p, dtype=float)
    gen = np.zeros_like(xi)
    csum = np.zeros_like(xi)
    for _ in range(steps):
        cs = np.cos(TWO_PI * xi)
        pi_ = pi_ - c * np.sin(TWO_PI * xi)
        xn = xi + pi_
        gen += 0.5 * (xn - xi) ** 2 + a * cs
        csum += cs
        xi = xn
    x[:] = xi
    p[:] = pi_
    return gen, csum


def tangent_log_growth(x, p, vx, vp, K, steps):
    c = K / TWO_PI
    xi = np.array(x, dtype=float)
    pi_ = np.array(p, dtype=float)
    a = np.array(vx, dtype=float)
    b = np.array(vp, dtype=float)
    acc = np.zeros_like(xi)
    bad = np.zeros(xi.shape, dtype=bool)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        for _ in range(steps):
            nb = -K * np.cos(TWO_PI * xi) * a + b
            na = a + nb
            pi_ = pi_ - c * np.sin(TWO_PI * xi)
            xi = xi + pi_
            norm = np.hypot(na, nb)
            bad |= (norm == 0.0) | ~np.isfinite(norm)
            acc += np.log(np.where(bad, 1.0, norm))
            a = na / np.where(bad, 1.0, norm)
            b = nb / np.where(bad, 1.0, norm)
    acc[bad] = np.nan
    x[:] = xi
    p[:] = pi_
    return acc


def _cells(x0, p0, dx, dp, h, ncell):
    """(segment index, wrapped cell id, unwrapped cx, unwrapped cp) for every bbox cell."""
    x1 = x0 + dx
    p1 = p0 + dp
    cx0 = np.floor(np.minimum(x0, x1) / h).astype(np.int64)
    cx1 = np.floor(np.maximum(x0, x1) / h).astype(np.int64)
    cp0 = np.floor(np.minimum(p0, p1) / h).astype(np.int64)
    cp1 = np.floor(np.maximum(p0, p1) / h).astype(np.int64)
    idx, cxs, cps = [], [], []
    # segments are shorter than a cell, so a bbox spans at most 2x2 cells
    for ox in (0, 1):
        for op in (0, 1):
            keep = (cx0 + ox <= cx1) & (cp0 + op <= cp1)
            k = np.nonzero(keep)[0]
            idx.append(k)
            cxs.append(cx0[k] + ox)
            cps.append(cp0[k] + op)
    idx = np.concatenate(idx)
    cx = np.concatenate(cxs)
    cp = np.concatenate(cps)
    cid = np.mod(cx, ncell) * ncell + np.mod(cp, ncell)
    return idx, cid, cx, cp


def polyline_crossings(ax, ap, adx, adp, bx, bp, bdx, bdp, ncell):
    h = 1.0 / ncell
    ia, ca, cxa, cpa = _cells(ax, ap, adx, adp, h, ncell)
    ib, cb, _, _ = _cells(bx, bp, bdx, bdp, h, ncell)
    order = np.argsort(cb, kind="stable")
    ib, cb = ib[order], cb[order]
    lo = np.searchsorted(cb, ca, side="left")
    hi = np.searchsorted(cb, ca, side="right")
    n = hi - lo
    rep = np.repeat(np.arange(ca.size), n)
    if rep.size == 0:
        empty_i = np.zeros(0, dtype=np.int64)
        return empty_i, empty_i, np.zeros(0), np.zeros(0), empty_i, empty_i
    offs = np.arange(rep.size) - np.repeat(np.cumsum(n) - n, n)
    k = ia[rep]
    q = ib[lo[rep] + offs]
    cx = np.mod(cxa[rep], ncell)
    cp = np.mod(cpa[rep], ncell)

    lx = np.floor(ax[k] - bx[q] + 0.5).astype(np.int64)
    lp = np.floor(ap[k] - bp[q] + 0.5).astype(np.int64)
    qx = bx[q] + lx - ax[k]
    qp = bp[q] + lp - ap[k]
    den = adx[k] * bdp[q] - adp[k] * bdx[q]
    with np.errstate(invalid="ignore", divide="ignore"):
        s = (qx * bdp[q] - qp * bdx[q]) / den
        r = (qx * adp[k] - qp * adx[k]) / den
    ok = (den != 0.0) & (s >= 0.0) & (s < 1.0) & (r >= 0.0) & (r < 1.0)
    ix = ax[k] + s * adx[k]
    ipp = ap[k] + s * adp[k]
    with np.errstate(invalid="ignore"):
        ok &= np.mod(np.floor(ix / h).astype(np.int64), ncell) == cx
        ok &= np.mod(np.floor(ipp / h).astype(np.int64), ncell) == cp
    sel = np.nonzero(ok)[0]
    # match the compiled kernel's ordering: by A segment, then by B bucket order
    sel = sel[np.argsort(k[sel], kind="stable")]
    return k[sel], q[sel], s[sel], r[sel], lx[sel], lp[sel]
