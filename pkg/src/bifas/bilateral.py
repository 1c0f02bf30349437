"""Bilateral filtering of images and of deep feature maps.

Both paths use the Gaussian ``g(x) = exp(-x**2 / sigma**2)`` (no factor of 2).

Image path: images are float arrays shaped (H, W) or (H, W, C) with channels
filtered independently. :func:`bilateral_base_direct` evaluates the windowed
filter exactly; :func:`bilateral_base_fast` is a bilateral-grid approximation
and :func:`bilateral_decompose` splits an image into base + residual.

Feature path: :func:`dbo` and :func:`dbo_full` are differentiable operators on
NCHW tensors. Neighbours outside the map are dropped and the normaliser sums
only the weights that were applied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import kernels
from .tensor import Tensor

# grid cells per sigma, spatial and range
_GRID_OVERSAMPLE = 2.0


@dataclass(frozen=True)
class BilateralParams:
    sigma_s: float
    sigma_r: float
    window: int

    def __post_init__(self):
        if not (self.sigma_s > 0 and self.sigma_r > 0):
            raise ValueError(f"sigmas must be positive, got {self.sigma_s}, {self.sigma_r}")
        if self.window < 1 or self.window % 2 != 1:
            raise ValueError(f"window must be odd and >= 1, got {self.window}")

    @classmethod
    def defaults_for(cls, image):
        """sigma_s = min(H, W) / 16, sigma_r = dynamic range / 10, window = 2 ceil(2 sigma_s) + 1.

        Returns ``None`` for images with zero dynamic range.
        """
        img = np.asarray(image)
        h, w = img.shape[:2]
        rng = float(img.max() - img.min())
        if rng <= 0:
            return None
        sigma_s = min(h, w) / 16.0
        return cls(sigma_s=sigma_s, sigma_r=rng / 10.0, window=2 * math.ceil(2 * sigma_s) + 1)


@dataclass
class BilateralDecomposition:
    base: np.ndarray
    residual: np.ndarray

    def reconstruct(self):
        return self.base + self.residual


@dataclass(frozen=True)
class DboParams:
    sigma_r: float = 1.0
    window: int = 3
    use_spatial: bool = False
    sigma_s: float | None = None

    def __post_init__(self):
        if not self.sigma_r > 0:
            raise ValueError(f"sigma_r must be positive, got {self.sigma_r}")
        if self.window < 1 or self.window % 2 != 1:
            raise ValueError(f"window must be odd and >= 1, got {self.window}")
        if self.use_spatial and not (self.sigma_s is not None and self.sigma_s > 0):
            raise ValueError("use_spatial requires a positive sigma_s")


def _as_hwc(image):
    img = np.asarray(image)
    if img.ndim == 2:
        return img[:, :, None], True
    if img.ndim != 3:
        raise ValueError(f"expected an (H, W) or (H, W, C) image, got shape {img.shape}")
    return img, False


def bilateral_base_direct(image, p=None):
    """Exact windowed bilateral filter, each channel filtered on its own."""
    img, squeeze = _as_hwc(image)
    p = p or BilateralParams.defaults_for(img)
    if p is None:
        return np.array(image, copy=True)
    x = img.astype(np.float64).transpose(2, 0, 1)[None]
    out = kernels.bilateral_forward(x, 1.0 / p.sigma_r ** 2, p.window, 1.0 / p.sigma_s ** 2)
    out = out[0].transpose(1, 2, 0).astype(img.dtype if img.dtype.kind == "f" else np.float64)
    return out[:, :, 0] if squeeze else out


def _grid_filter_channel(chan, p):
    h, w = chan.shape
    lo, hi = float(chan.min()), float(chan.max())
    cell_s = p.sigma_s / _GRID_OVERSAMPLE
    cell_r = p.sigma_r / _GRID_OVERSAMPLE
    pad = 2
    yy, xx = np.mgrid[0:h, 0:w]
    gy = yy / cell_s + pad
    gx = xx / cell_s + pad
    gz = (chan - lo) / cell_r + pad
    shape = (
        int(math.ceil((h - 1) / cell_s)) + 2 * pad + 2,
        int(math.ceil((w - 1) / cell_s)) + 2 * pad + 2,
        int(math.ceil((hi - lo) / cell_r)) + 2 * pad + 2,
    )
    num = np.zeros(shape)
    den = np.zeros(shape)
    iy, ix, iz = (np.floor(g).astype(np.intp) for g in (gy, gx, gz))
    fy, fx, fz = gy - iy, gx - ix, gz - iz
    # trilinear splat
    for oy in (0, 1):
        wy = fy if oy else 1 - fy
        for ox in (0, 1):
            wx = fx if ox else 1 - fx
            for oz in (0, 1):
                ww = wy * wx * (fz if oz else 1 - fz)
                np.add.at(num, (iy + oy, ix + ox, iz + oz), ww * chan)
                np.add.at(den, (iy + oy, ix + ox, iz + oz), ww)
    # exp(-d^2/sigma^2) has standard deviation sigma/sqrt(2)
    sd = _GRID_OVERSAMPLE / math.sqrt(2.0)
    num = ndimage.gaussian_filter(num, sd, mode="constant")
    den = ndimage.gaussian_filter(den, sd, mode="constant")
    coords = np.stack([gy.ravel(), gx.ravel(), gz.ravel()])
    n = ndimage.map_coordinates(num, coords, order=1)
    d = ndimage.map_coordinates(den, coords, order=1)
    return (n / d).reshape(h, w)


def bilateral_base_fast(image, p=None):
    """Bilateral-grid approximation of :func:`bilateral_base_direct`.

    Pixels are splatted trilinearly into a (y, x, intensity) grid sampled at
    half a sigma per cell, the grid is Gaussian-blurred and the result is
    sliced back out trilinearly. An image with zero dynamic range is returned
    unchanged.
    """
    img, squeeze = _as_hwc(image)
    if float(img.max() - img.min()) <= 0:
        return np.array(image, copy=True)
    p = p or BilateralParams.defaults_for(img)
    x = img.astype(np.float64)
    out = np.empty_like(x)
    for c in range(x.shape[2]):
        if x[:, :, c].max() == x[:, :, c].min():
            out[:, :, c] = x[:, :, c]
        else:
            out[:, :, c] = _grid_filter_channel(x[:, :, c], p)
    out = out.astype(img.dtype if img.dtype.kind == "f" else np.float64)
    return out[:, :, 0] if squeeze else out


def bilateral_decompose(image, p=None):
    img = np.asarray(image)
    if img.dtype.kind != "f":
        img = img.astype(np.float64)
    base = bilateral_base_fast(img, p)
    return BilateralDecomposition(base=base, residual=img - base)


def psnr(a, b, peak=1.0):
    mse = float(np.mean((np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) ** 2))
    return math.inf if mse == 0 else 10.0 * math.log10(peak * peak / mse)


def _bilateral_op(x, inv_sr2, window, inv_ss2):
    out = kernels.bilateral_forward(x.data, inv_sr2, window, inv_ss2)

    def backward(g):
        return (kernels.bilateral_backward(x.data, out, g, inv_sr2, window, inv_ss2),)

    return Tensor._from_op(out, (x,), backward)


def dbo(features, p=DboParams()):
    """Deep bilateral operator: range-only bilateral mean over each channel's window."""
    if p.use_spatial:
        raise ValueError("dbo takes range-only params; use dbo_full for the spatial variant")
    return _bilateral_op(features, 1.0 / p.sigma_r ** 2, p.window, 0.0)


def dbo_full(features, p):
    """DBO with the spatial Gaussian on neighbour distance restored."""
    if not p.use_spatial:
        raise ValueError("dbo_full needs params with use_spatial=True")
    return _bilateral_op(features, 1.0 / p.sigma_r ** 2, p.window, 1.0 / p.sigma_s ** 2)
