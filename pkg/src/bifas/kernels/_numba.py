"""Loop kernels compiled with numba.

Same contracts as ``_numpy``. Sums accumulate in float64 regardless of the
array dtype, so float32 results can differ from the numpy path in the last
few ulps.
"""

import math

import numpy as np
from numba import njit


def _spatial_table(window, inv_ss2):
    r = window // 2
    d = np.arange(-r, r + 1, dtype=np.float64)
    return np.exp(-(d[:, None] ** 2 + d[None, :] ** 2) * inv_ss2)


@njit(cache=True)
def _bilateral_forward(x, inv_sr2, spatial, out):
    n, c, h, w = x.shape
    r = spatial.shape[0] // 2
    for b in range(n):
        for ch in range(c):
            for i in range(h):
                i0 = max(0, i - r)
                i1 = min(h, i + r + 1)
                for j in range(w):
                    j0 = max(0, j - r)
                    j1 = min(w, j + r + 1)
                    xp = x[b, ch, i, j]
                    num = 0.0
                    den = 0.0
                    for qi in range(i0, i1):
                        for qj in range(j0, j1):
                            xq = x[b, ch, qi, qj]
                            d = xp - xq
                            wq = spatial[qi - i + r, qj - j + r] * math.exp(-d * d * inv_sr2)
                            num += wq * xq
                            den += wq
                    out[b, ch, i, j] = num / den


@njit(cache=True)
def _bilateral_backward(x, out, gout, inv_sr2, spatial, gx):
    n, c, h, w = x.shape
    window = spatial.shape[0]
    r = window // 2
    wbuf = np.empty((window, window))
    for b in range(n):
        for ch in range(c):
            for i in range(h):
                i0 = max(0, i - r)
                i1 = min(h, i + r + 1)
                for j in range(w):
                    j0 = max(0, j - r)
                    j1 = min(w, j + r + 1)
                    xp = x[b, ch, i, j]
                    den = 0.0
                    for qi in range(i0, i1):
                        for qj in range(j0, j1):
                            d = xp - x[b, ch, qi, qj]
                            wq = spatial[qi - i + r, qj - j + r] * math.exp(-d * d * inv_sr2)
                            wbuf[qi - i0, qj - j0] = wq
                            den += wq
                    g = gout[b, ch, i, j] / den
                    o = out[b, ch, i, j]
                    acc_p = 0.0
                    for qi in range(i0, i1):
                        for qj in range(j0, j1):
                            xq = x[b, ch, qi, qj]
                            wq = wbuf[qi - i0, qj - j0]
                            through_w = g * (xq - o) * wq * 2.0 * inv_sr2 * (xp - xq)
                            gx[b, ch, qi, qj] += g * wq + through_w
                            acc_p -= through_w
                    gx[b, ch, i, j] += acc_p


@njit(cache=True)
def _refine_forward(f, wk, k, out):
    # offset-outer, column-inner keeps every access contiguous
    n, c, h, w = f.shape
    r = k // 2
    for b in range(n):
        for ch in range(c):
            for a in range(k):
                dy = a - r
                for e in range(k):
                    dx = e - r
                    idx = a * k + e
                    for i in range(max(0, -dy), min(h, h - dy)):
                        for j in range(max(0, -dx), min(w, w - dx)):
                            out[b, ch, i, j] += wk[b, idx, i, j] * f[b, ch, i + dy, j + dx]


@njit(cache=True)
def _refine_backward(f, wk, gout, k, gf, gw):
    n, c, h, w = f.shape
    r = k // 2
    for b in range(n):
        for ch in range(c):
            for a in range(k):
                dy = a - r
                for e in range(k):
                    dx = e - r
                    idx = a * k + e
                    for i in range(max(0, -dy), min(h, h - dy)):
                        for j in range(max(0, -dx), min(w, w - dx)):
                            g = gout[b, ch, i, j]
                            gw[b, idx, i, j] += g * f[b, ch, i + dy, j + dx]
                            gf[b, ch, i + dy, j + dx] += wk[b, idx, i, j] * g


@njit(cache=True)
def _maxpool2_forward(x, out, arg):
    n, c, h, w = x.shape
    for b in range(n):
        for ch in range(c):
            for i in range(h // 2):
                for j in range(w // 2):
                    best = x[b, ch, 2 * i, 2 * j]
                    bi = 0
                    for t in range(1, 4):
                        v = x[b, ch, 2 * i + t // 2, 2 * j + t % 2]
                        if v > best:
                            best = v
                            bi = t
                    out[b, ch, i, j] = best
                    arg[b, ch, i, j] = bi


@njit(cache=True)
def _maxpool2_backward(gout, arg, gx):
    n, c, ho, wo = gout.shape
    for b in range(n):
        for ch in range(c):
            for i in range(ho):
                for j in range(wo):
                    t = arg[b, ch, i, j]
                    gx[b, ch, 2 * i + t // 2, 2 * j + t % 2] = gout[b, ch, i, j]


def bilateral_forward(x, inv_sr2, window, inv_ss2):
    x = np.ascontiguousarray(x)
    out = np.empty_like(x)
    _bilateral_forward(x, float(inv_sr2), _spatial_table(int(window), float(inv_ss2)), out)
    return out


def bilateral_backward(x, out, gout, inv_sr2, window, inv_ss2):
    x = np.ascontiguousarray(x)
    gx = np.zeros(x.shape)
    _bilateral_backward(x, np.ascontiguousarray(out), np.ascontiguousarray(gout, dtype=x.dtype),
                        float(inv_sr2), _spatial_table(int(window), float(inv_ss2)), gx)
    return gx.astype(x.dtype)


def refine_forward(f, wk, k):
    f = np.ascontiguousarray(f)
    out = np.zeros(f.shape)
    _refine_forward(f, np.ascontiguousarray(wk, dtype=f.dtype), int(k), out)
    return out.astype(f.dtype)


def refine_backward(f, wk, gout, k):
    f = np.ascontiguousarray(f)
    wk = np.ascontiguousarray(wk, dtype=f.dtype)
    gf = np.zeros(f.shape)
    gw = np.zeros(wk.shape)
    _refine_backward(f, wk, np.ascontiguousarray(gout, dtype=f.dtype), int(k), gf, gw)
    return gf.astype(f.dtype), gw.astype(f.dtype)


def maxpool2_forward(x):
    x = np.ascontiguousarray(x)
    n, c, h, w = x.shape
    out = np.empty((n, c, h // 2, w // 2), dtype=x.dtype)
    arg = np.empty((n, c, h // 2, w // 2), dtype=np.int8)
    _maxpool2_forward(x, out, arg)
    return out, arg


def maxpool2_backward(gout, arg):
    gout = np.ascontiguousarray(gout)
    n, c, ho, wo = gout.shape
    gx = np.zeros((n, c, ho * 2, wo * 2), dtype=gout.dtype)
    _maxpool2_backward(gout, np.ascontiguousarray(arg), gx)
    return gx
