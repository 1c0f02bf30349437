"""Vectorised numpy kernels.

Every function here has a twin in ``_numba`` with an identical signature. The
numpy versions loop over window offsets and vectorise over the whole batch,
which keeps them readable enough to serve as the fallback path.
"""

import numpy as np


def _window_offsets(window):
    r = window // 2
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            yield dy, dx


def bilateral_forward(x, inv_sr2, window, inv_ss2):
    """Windowed bilateral mean over each channel of an NCHW array.

    Weights are ``exp(-|x_p - x_q|^2 * inv_sr2) * exp(-|p - q|^2 * inv_ss2)``;
    neighbours falling outside the map are dropped and the normaliser only sums
    the weights actually applied. ``inv_ss2 == 0`` disables the spatial term.
    """
    n, c, h, w = x.shape
    r = window // 2
    xp = np.pad(x, ((0, 0), (0, 0), (r, r), (r, r)))
    valid = np.pad(np.ones((h, w), dtype=x.dtype), r)
    num = np.zeros_like(x)
    den = np.zeros_like(x)
    for dy, dx in _window_offsets(window):
        xq = xp[:, :, r + dy:r + dy + h, r + dx:r + dx + w]
        m = valid[r + dy:r + dy + h, r + dx:r + dx + w]
        s = np.exp(-(dy * dy + dx * dx) * inv_ss2)
        d = x - xq
        wq = (s * m) * np.exp(-(d * d) * inv_sr2)
        num += wq * xq
        den += wq
    return num / den


def bilateral_backward(x, out, gout, inv_sr2, window, inv_ss2):
    n, c, h, w = x.shape
    r = window // 2
    xp = np.pad(x, ((0, 0), (0, 0), (r, r), (r, r)))
    valid = np.pad(np.ones((h, w), dtype=x.dtype), r)

    den = np.zeros_like(x)
    for dy, dx in _window_offsets(window):
        xq = xp[:, :, r + dy:r + dy + h, r + dx:r + dx + w]
        m = valid[r + dy:r + dy + h, r + dx:r + dx + w]
        d = x - xq
        den += (np.exp(-(dy * dy + dx * dx) * inv_ss2) * m) * np.exp(-(d * d) * inv_sr2)
    g_over_k = gout / den

    gx = np.zeros_like(x)
    gxp = np.zeros_like(xp)
    for dy, dx in _window_offsets(window):
        sl = (slice(None), slice(None), slice(r + dy, r + dy + h), slice(r + dx, r + dx + w))
        xq = xp[sl]
        m = valid[sl[2], sl[3]]
        d = x - xq
        wq = (np.exp(-(dy * dy + dx * dx) * inv_ss2) * m) * np.exp(-(d * d) * inv_sr2)
        direct = g_over_k * wq
        # d out_p / d w_q = (x_q - out_p) / k, and d w_q / d x_q = -d w_q / d x_p
        through_w = g_over_k * (xq - out) * wq * (2 * inv_sr2) * d
        gxp[sl] += direct + through_w
        gx -= through_w
    gx += gxp[:, :, r:r + h, r:r + w]
    return gx


def refine_forward(f, wk, k):
    """Reassemble each location from its zero-padded K x K neighbourhood.

    ``wk`` has shape (N, K*K, H, W); kernel index ``a * K + b`` addresses the
    neighbour at row offset ``a - K // 2`` and column offset ``b - K // 2``.
    """
    n, c, h, w = f.shape
    r = k // 2
    fp = np.pad(f, ((0, 0), (0, 0), (r, r), (r, r)))
    out = np.zeros_like(f)
    for a in range(k):
        for b in range(k):
            idx = a * k + b
            out += wk[:, idx:idx + 1] * fp[:, :, a:a + h, b:b + w]
    return out


def refine_backward(f, wk, gout, k):
    n, c, h, w = f.shape
    r = k // 2
    fp = np.pad(f, ((0, 0), (0, 0), (r, r), (r, r)))
    gfp = np.zeros_like(fp)
    gw = np.empty_like(wk)
    for a in range(k):
        for b in range(k):
            idx = a * k + b
            gfp[:, :, a:a + h, b:b + w] += wk[:, idx:idx + 1] * gout
            gw[:, idx] = (gout * fp[:, :, a:a + h, b:b + w]).sum(axis=1)
    return gfp[:, :, r:r + h, r:r + w].copy(), gw


def maxpool2_forward(x):
    """2x2 stride-2 max pool; returns the pooled map and the in-window argmax.

    Window positions are scanned row-major and ties go to the first position.
    """
    n, c, h, w = x.shape
    win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    win = win.reshape(n, c, h // 2, w // 2, 4)
    arg = np.argmax(win, axis=-1).astype(np.int8)
    out = np.take_along_axis(win, arg[..., None].astype(np.intp), axis=-1)[..., 0]
    return out, arg


def maxpool2_backward(gout, arg):
    n, c, ho, wo = gout.shape
    onehot = arg[..., None] == np.arange(4, dtype=np.int8)
    win = np.where(onehot, gout[..., None], 0).astype(gout.dtype)
    win = win.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return np.ascontiguousarray(win.reshape(n, c, ho * 2, wo * 2))
