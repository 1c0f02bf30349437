"""8-bit image I/O and area resizing.

Images are float arrays in [0, 1], (H, W) for grayscale and (H, W, 3) for RGB.
"""

from __future__ import annotations

import numpy as np
from PIL import Image


def load_image(path, mode="RGB"):
    with Image.open(path) as im:
        arr = np.asarray(im.convert(mode), dtype=np.float32)
    return arr / 255.0


def to_uint8(arr):
    return np.clip(np.rint(np.asarray(arr, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def save_png(path, arr):
    """Write a float image in [0, 1]; values outside are clamped."""
    Image.fromarray(to_uint8(arr)).save(path, format="PNG")


def resize_area(arr, size):
    """Resize to ``size`` x ``size``; exact block means when the factor is integral."""
    arr = np.asarray(arr, dtype=np.float32)
    h, w = arr.shape[:2]
    if (h, w) == (size, size):
        return arr
    if h % size == 0 and w % size == 0:
        fh, fw = h // size, w // size
        return arr.reshape(size, fh, size, fw, *arr.shape[2:]).mean(axis=(1, 3)).astype(np.float32)
    chans = [arr] if arr.ndim == 2 else [arr[:, :, c] for c in range(arr.shape[2])]
    out = [np.asarray(Image.fromarray(c, mode="F").resize((size, size), Image.BOX)) for c in chans]
    return out[0] if arr.ndim == 2 else np.stack(out, axis=-1)
