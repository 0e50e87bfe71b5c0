"""Localization CNN and the full differentiable rectifier.

Six 3x3 conv stages (each relu + 2x2 max-pooled) shrink the 32x64
working input to 1x1, two fully connected layers emit the grid head
vector, and the head feeds the polynomial grid and the TPS warp.  The
final layer starts at the identity transform: zero weights with the
identity head vector as bias, so an untrained rectifier is a bilinear
resize.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    ParameterStore,
    ShapeError,
    Tensor,
    conv2d,
    linear,
    maxpool2,
    relu,
    relu_uniform_init,
    stack,
)
from .imaging import Image, resize_bilinear
from .poly_grid import ControlGrid, GridConfig, build_grid, identity_raw
from .tps import RECTIFIED_SIZE, rectify_image

INPUT_SIZE = (36, 128)     # (H, W) of the pipeline input image
LOC_INPUT_SIZE = (32, 64)  # (H, W) consumed by the localization CNN


@dataclass(frozen=True)
class RectNetConfig:
    """Localization network widths; ``scale`` divides every width."""

    grid: GridConfig = field(default_factory=GridConfig)
    conv_channels: tuple[int, ...] = (32, 64, 64, 128, 128, 256)
    fc1_width: int = 256
    in_channels: int = 1
    scale: int = 1

    def __post_init__(self):
        if len(self.conv_channels) != 6:
            raise ValueError("the localization CNN has exactly six conv stages")
        if self.scale < 1:
            raise ValueError("scale must be >= 1")

    def channel(self, i: int) -> int:
        return max(1, self.conv_channels[i] // self.scale)

    @property
    def fc1(self) -> int:
        return max(1, self.fc1_width // self.scale)


class RectifierNet:
    """Predicts a control grid from an image and applies the TPS warp."""

    def __init__(self, cfg: RectNetConfig, store: ParameterStore, rng: np.random.Generator, prefix: str = "rect"):
        self.cfg = cfg
        self.store = store
        self.prefix = prefix
        self._build(rng)

    def _build(self, rng: np.random.Generator) -> None:
        cfg = self.cfg
        in_ch = cfg.in_channels
        self.convs = []
        for i in range(6):
            out_ch = cfg.channel(i)
            w = self.store.add(
                f"{self.prefix}.conv{i + 1}.weight",
                relu_uniform_init(rng, (out_ch, in_ch, 3, 3), fan_in=in_ch * 9),
            )
            b = self.store.add(f"{self.prefix}.conv{i + 1}.bias", np.zeros(out_ch))
            self.convs.append((w, b))
            in_ch = out_ch
        flat = cfg.channel(5)  # spatial collapses to 1x1 after six pools
        self.fc1_w = self.store.add(
            f"{self.prefix}.fc1.weight", relu_uniform_init(rng, (cfg.fc1, flat), fan_in=flat)
        )
        self.fc1_b = self.store.add(f"{self.prefix}.fc1.bias", np.zeros(cfg.fc1))
        # identity initialization: any input maps to the identity head vector
        self.fc2_w = self.store.add(
            f"{self.prefix}.fc2.weight", np.zeros((cfg.grid.head_dim, cfg.fc1))
        )
        self.fc2_b = self.store.add(f"{self.prefix}.fc2.bias", identity_raw(cfg.grid))

    # ------------------------------------------------------------------
    def prepare(self, img: Image) -> Image:
        """Normalize channels and resize to the 36x128 pipeline input."""
        img = img.to_gray() if self.cfg.in_channels == 1 else img.to_rgb()
        if (img.height, img.width) != INPUT_SIZE:
            img = resize_bilinear(img, *INPUT_SIZE)
        return img

    def localize_batch(self, x: Tensor) -> Tensor:
        """Head vectors (B, M*N + M + W) from a (B, C, 32, 64) batch."""
        expect = (self.cfg.in_channels,) + LOC_INPUT_SIZE
        if x.data.ndim != 4 or x.data.shape[1:] != expect:
            raise ShapeError(f"localization input must be (B,{expect[0]},{expect[1]},{expect[2]}), got {x.shape}")
        h = x - 0.5  # center pixel values for the conv stack
        for w, b in self.convs:
            h = maxpool2(relu(conv2d(h, w, b, stride=(1, 1), padding=(1, 1))))
        if h.data.shape[2:] != (1, 1):
            raise ShapeError(f"conv stack did not collapse spatially: {h.shape}")
        h = h.reshape(h.data.shape[0], h.data.shape[1])
        h = relu(linear(h, self.fc1_w, self.fc1_b))
        return linear(h, self.fc2_w, self.fc2_b)

    def localize(self, img: Image) -> Tensor:
        """Head vector for one image (resized internally to 32x64)."""
        img = self.prepare(img)
        small = resize_bilinear(img, *LOC_INPUT_SIZE)
        raw = self.localize_batch(Tensor(small.to_chw()[None]))
        return raw.reshape(self.cfg.grid.head_dim)

    def rectify_batch(self, images: list[Image]) -> tuple[Tensor, list[ControlGrid]]:
        """Rectified (B, C, 32, 100) batch plus the per-image control grids."""
        prepared = [self.prepare(im) for im in images]
        loc = np.stack([resize_bilinear(im, *LOC_INPUT_SIZE).to_chw() for im in prepared])
        raw = self.localize_batch(Tensor(loc))
        outs, grids = [], []
        for i, im in enumerate(prepared):
            grid = build_grid(self.cfg.grid, raw[i])
            outs.append(rectify_image(Tensor(im.to_chw()), grid))
            grids.append(grid)
        return stack(outs, axis=0), grids

    def rectify(self, img: Image) -> tuple[Tensor, ControlGrid]:
        """Rectify one image to (C, 32, 100)."""
        batch, grids = self.rectify_batch([img])
        c = self.cfg.in_channels
        return batch.reshape(c, *RECTIFIED_SIZE), grids[0]


def baseline_curvature(img: Image) -> float:
    """Quadratic coefficient of the dark-pixel centroid column fit.

    Ink weight per pixel is its darkness below the image's mid level.
    Column centroids (in units of image height) are fit against the
    normalized column coordinate u in [-1, 1] with a weighted quadratic;
    the absolute u^2 coefficient measures baseline curvature.
    """
    g = img.to_gray().data[:, :, 0]
    h, w = g.shape
    mid = 0.5 * (g.min() + g.max())
    ink = np.maximum(mid - g, 0.0)
    col_mass = ink.sum(axis=0)
    valid = col_mass > 1e-9
    if valid.sum() < 3:
        return 0.0
    rows = np.arange(h)
    centroid = (ink * rows[:, None]).sum(axis=0)[valid] / col_mass[valid] / h
    u = (np.arange(w)[valid] - (w - 1) / 2.0) / ((w - 1) / 2.0)
    wts = col_mass[valid]
    design = np.stack([u * u, u, np.ones_like(u)], axis=1)
    lhs = design * wts[:, None]
    coef, *_ = np.linalg.lstsq(lhs, centroid * wts, rcond=None)
    return float(abs(coef[0]))
