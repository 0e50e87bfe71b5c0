"""Control-point grid built from a shared polynomial plus per-row biases.

The localization head emits one flat vector per image.  Its first M*N
entries become the x coordinates of an M x N grid (sigmoid-squashed into
(0, 1)), the next M entries are per-row biases, and the last W entries
are the coefficients of a single polynomial shared by all rows.  Row i's
y coordinates are ``b_i + sum_k a_k * x^k``, clamped to [0, 1], so the
rows are vertical translates of one common curve.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .autodiff import Tensor, concat, sigmoid, stack


class GridConfigError(ValueError):
    """Raised when a head vector does not match the configured grid."""


@dataclass(frozen=True)
class GridConfig:
    """Grid geometry: M rows, N columns, polynomial order W."""

    m: int = 3
    n: int = 10
    w: int = 4

    def __post_init__(self):
        if self.m < 2 or self.n < 2 or self.w < 1:
            raise GridConfigError(f"need M >= 2, N >= 2, W >= 1, got ({self.m}, {self.n}, {self.w})")

    @property
    def head_dim(self) -> int:
        """Localization head width: M*N x-coords + M biases + W coefficients."""
        return self.m * self.n + self.m + self.w

    @property
    def num_points(self) -> int:
        return self.m * self.n


@dataclass
class ControlGrid:
    """Predicted control points plus the parameters that generated them."""

    cfg: GridConfig
    points: Tensor                # (M, N, 2) final (x, y) pairs in [0, 1]^2
    coeffs: Tensor | None = None  # (W,)   shared polynomial coefficients a_1..a_W
    biases: Tensor | None = None  # (M,)   per-row vertical offsets
    xs: Tensor | None = None      # (M, N) x coordinates in (0, 1)


def grid_from_points(cfg: GridConfig, points: Tensor) -> ControlGrid:
    """Wrap explicit control points (for tests and direct warps)."""
    if points.data.shape != (cfg.m, cfg.n, 2):
        raise GridConfigError(f"points shape {points.data.shape} != ({cfg.m}, {cfg.n}, 2)")
    return ControlGrid(cfg=cfg, points=points)


def eval_poly(coeffs: Sequence[float], x: float) -> float:
    """Evaluate sum_{k=1..W} a_k * x^k (no constant term)."""
    acc = 0.0
    xp = 1.0
    for a in coeffs:
        xp *= x
        acc += a * xp
    return acc


def target_points(cfg: GridConfig) -> np.ndarray:
    """The regular grid on the rectified plane: (j/N, i/M), 1-indexed."""
    xs = np.arange(1, cfg.n + 1) / cfg.n
    ys = np.arange(1, cfg.m + 1) / cfg.m
    pts = np.empty((cfg.m, cfg.n, 2), dtype=np.float64)
    pts[:, :, 0] = xs[None, :]
    pts[:, :, 1] = ys[:, None]
    return pts


def build_grid(cfg: GridConfig, raw: Tensor) -> ControlGrid:
    """Assemble the control grid from a raw localization head vector.

    Layout of ``raw`` (length M*N + M + W): x coordinates row-major, then
    biases, then polynomial coefficients.  Differentiable end to end.
    """
    if raw.data.ndim != 1 or raw.data.shape[0] != cfg.head_dim:
        raise GridConfigError(
            f"head vector has length {raw.data.shape}, expected ({cfg.head_dim},) "
            f"for grid ({cfg.m}x{cfg.n}, order {cfg.w})"
        )
    m, n, w = cfg.m, cfg.n, cfg.w
    xs = sigmoid(raw[: m * n]).reshape(m, n)
    biases = raw[m * n : m * n + m]
    coeffs = raw[m * n + m :]

    # y = b_i + sum_k a_k x^k, computed with an explicit power ladder so
    # coinciding x rows give bitwise-identical polynomial values
    xpow = xs
    poly = coeffs[0] * xpow
    for k in range(1, w):
        xpow = xpow * xs
        poly = poly + coeffs[k] * xpow
    ys = (biases.reshape(m, 1) + poly).clamp(0.0, 1.0)

    points = stack([xs, ys], axis=2)
    return ControlGrid(cfg=cfg, points=points, coeffs=coeffs, biases=biases, xs=xs)


def identity_raw(cfg: GridConfig) -> np.ndarray:
    """Raw head vector whose grid equals the regular target grid.

    x entries are inverse-sigmoid of j/N (saturated at +40 for j = N,
    where sigmoid already rounds to exactly 1.0 in float64), biases are
    i/M, and the polynomial coefficients are zero.
    """
    tp = target_points(cfg)
    xs = tp[:, :, 0].reshape(-1)
    with np.errstate(divide="ignore"):
        logits = np.log(xs / (1.0 - xs))
    logits = np.clip(logits, -40.0, 40.0)
    biases = np.arange(1, cfg.m + 1) / cfg.m
    return np.concatenate([logits, biases, np.zeros(cfg.w)])
