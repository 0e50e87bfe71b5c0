"""Image container and plain-numpy resampling helpers.

Images are float64 arrays of shape (H, W, C) with values in [0, 1] and
C in {1, 3}.  Sampling uses the pixel-center convention: normalized
coordinate u in [0, 1] maps to continuous pixel coordinate u * W - 0.5,
and out-of-range samples clamp to the border pixel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Image:
    """A float image in [0, 1], row-major, (H, W, C)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ValueError(f"image must be (H, W) or (H, W, C in {{1,3}}), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image contains non-finite values")
        self.data = np.ascontiguousarray(arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def to_chw(self) -> np.ndarray:
        return np.ascontiguousarray(self.data.transpose(2, 0, 1))

    @classmethod
    def from_chw(cls, arr: np.ndarray) -> "Image":
        return cls(np.asarray(arr).transpose(1, 2, 0))

    def to_gray(self) -> "Image":
        if self.channels == 1:
            return self
        r, g, b = self.data[..., 0], self.data[..., 1], self.data[..., 2]
        return Image(0.299 * r + 0.587 * g + 0.114 * b)

    def to_rgb(self) -> "Image":
        if self.channels == 3:
            return self
        return Image(np.repeat(self.data, 3, axis=2))


def sample_bilinear_np(chw: np.ndarray, xn: np.ndarray, yn: np.ndarray) -> np.ndarray:
    """Bilinear gather from a (C, H, W) array at normalized (x, y) points.

    Returns a (C,) + xn.shape array.  Border-clamped outside the image.
    """
    c, h, w = chw.shape
    fx = xn * w - 0.5
    fy = yn * h - 0.5
    x0 = np.floor(fx).astype(np.int64)
    y0 = np.floor(fy).astype(np.int64)
    wx = fx - x0
    wy = fy - y0
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    tl = chw[:, y0c, x0c]
    tr = chw[:, y0c, x1c]
    bl = chw[:, y1c, x0c]
    br = chw[:, y1c, x1c]
    top = tl * (1.0 - wx) + tr * wx
    bot = bl * (1.0 - wx) + br * wx
    return top * (1.0 - wy) + bot * wy


def resize_bilinear(img: Image, out_h: int, out_w: int) -> Image:
    """Resize with bilinear sampling at output pixel centers."""
    xs = (np.arange(out_w) + 0.5) / out_w
    ys = (np.arange(out_h) + 0.5) / out_h
    xg, yg = np.meshgrid(xs, ys)
    chw = sample_bilinear_np(img.to_chw(), xg, yg)
    return Image.from_chw(chw)
