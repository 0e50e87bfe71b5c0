"""Thin-plate-spline solve and differentiable image resampling.

The spline maps points on the regular rectified plane to points on the
source image: kernels sit on the fixed regular grid and the predicted
control points form the right-hand side.  The lifted system matrix
depends only on the grid geometry, so its LU factorization is computed
once per configuration and reused; one iterative-refinement step against
the unregularized matrix keeps the interpolation conditions at machine
precision while the small Tikhonov term guards near-singularity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .autodiff import Tensor, _accum, matmul
from .imaging import Image
from .poly_grid import ControlGrid, GridConfig, target_points

TIKHONOV_EPS = 1e-9
_COND_LIMIT = 1e12

RECTIFIED_SIZE = (32, 100)  # (H, W) of the rectified image


class TpsSolveError(ArithmeticError):
    """Raised when the lifted TPS system cannot be solved reliably."""


@dataclass(frozen=True)
class TargetGrid:
    """The regular M x N grid on the rectified plane, points (j/N, i/M)."""

    cfg: GridConfig
    points: np.ndarray  # (M, N, 2)

    @classmethod
    def from_config(cls, cfg: GridConfig) -> "TargetGrid":
        return cls(cfg=cfg, points=target_points(cfg))

    @property
    def flat(self) -> np.ndarray:
        return self.points.reshape(-1, 2)


@dataclass
class TpsMapping:
    """Solved transformation: maps rectified-plane points to source points."""

    T: Tensor                # (M*N + 3, 2): kernel weights, then [1, x, y] affine rows
    centers: np.ndarray      # (M*N, 2) kernel centers on the rectified plane
    direction: str = "rectified_to_source"


def tps_kernel(r2):
    """Radial kernel r^2 * log r, evaluated as 0.5 * r2 * log(r2); 0 at r2 == 0."""
    r2 = np.asarray(r2, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = 0.5 * r2 * np.log(r2)
    out = np.where(r2 > 0.0, val, 0.0)
    return float(out) if out.ndim == 0 else out


class _TpsSystem:
    """Cached lifted system for one grid geometry."""

    def __init__(self, cfg: GridConfig):
        centers = target_points(cfg).reshape(-1, 2)
        k = centers.shape[0]
        d2 = ((centers[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        a0 = np.zeros((k + 3, k + 3), dtype=np.float64)
        a0[:k, :k] = tps_kernel(d2)
        a0[:k, k] = 1.0
        a0[:k, k + 1 :] = centers
        a0[k, :k] = 1.0
        a0[k + 1 :, :k] = centers.T
        areg = a0.copy()
        areg[:k, :k] += TIKHONOV_EPS * np.eye(k)
        cond = np.linalg.cond(areg)
        if not np.isfinite(cond) or cond > _COND_LIMIT:
            raise TpsSolveError(
                f"lifted TPS matrix for grid {cfg.m}x{cfg.n} is ill-conditioned (cond={cond:.3e})"
            )
        self.centers = centers
        self.k = k
        self.a0 = a0
        self.lu = lu_factor(areg)
        self.cond = cond

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        # LU solve plus one refinement step against the unregularized matrix;
        # the map stays linear in rhs and symmetric, so backward reuses it
        t = lu_solve(self.lu, rhs)
        return t + lu_solve(self.lu, rhs - self.a0 @ t)


_SYSTEMS: dict[tuple[int, int], _TpsSystem] = {}
_OUT_LIFTS: dict[tuple[int, int, int, int], np.ndarray] = {}


def _system(cfg: GridConfig) -> _TpsSystem:
    key = (cfg.m, cfg.n)
    if key not in _SYSTEMS:
        _SYSTEMS[key] = _TpsSystem(cfg)
    return _SYSTEMS[key]


def lift_points(centers: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Feature rows [phi(|p - c_1|) ... phi(|p - c_K|), 1, x, y] for each point."""
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return np.concatenate([tps_kernel(d2), np.ones((pts.shape[0], 1)), pts], axis=1)


def solve_tps(centers: TargetGrid, values) -> TpsMapping:
    """Solve for the mapping that carries the regular grid onto ``values``.

    ``values`` is a ControlGrid or a tensor of shape (M, N, 2) or (K, 2).
    The solve is linear in the values, so its Jacobian is the fixed
    system inverse and gradients flow back through one more solve.
    """
    cfg = centers.cfg
    sys_ = _system(cfg)
    vt = values.points if isinstance(values, ControlGrid) else values
    vals = vt.reshape(sys_.k, 2) if vt.data.shape != (sys_.k, 2) else vt

    rhs = np.zeros((sys_.k + 3, 2), dtype=np.float64)
    rhs[: sys_.k] = vals.data
    t_data = sys_.solve(rhs)
    if not np.all(np.isfinite(t_data)):
        raise TpsSolveError(
            f"TPS solve produced non-finite weights (cond={sys_.cond:.3e})"
        )

    def bwd(out):
        dr = sys_.solve(out.grad)
        _accum(vals, dr[: sys_.k])

    t = Tensor._from_op(t_data, (vals,), bwd)
    return TpsMapping(T=t, centers=sys_.centers)


def map_point(mapping: TpsMapping, pts) -> Tensor:
    """Map rectified-plane points through the spline to the source plane.

    Accepts a single (x, y) pair or an (P, 2) array; returns a tensor of
    matching shape.  Differentiable with respect to the mapping.
    """
    arr = np.asarray(pts, dtype=np.float64)
    single = arr.ndim == 1
    lift = Tensor(lift_points(mapping.centers, arr))
    out = matmul(lift, mapping.T)
    return out.reshape(2) if single else out


def sample_bilinear(img, pts) -> Tensor:
    """Bilinearly sample an image at normalized source points.

    ``img`` is a (C, H, W) tensor or an Image; ``pts`` is a tensor or
    array of shape (P, 2) or (2,) holding normalized (x, y).  The result
    has shape (C, P) (or (C,) for a single point) and is differentiable
    with respect to both the image and the points.  Out-of-image samples
    clamp to the border pixel, so their point-gradients vanish.
    """
    if isinstance(img, Image):
        img = Tensor(img.to_chw())
    if not isinstance(pts, Tensor):
        pts = Tensor(np.asarray(pts, dtype=np.float64))
    single = pts.data.ndim == 1
    p = pts.reshape(1, 2) if single else pts

    c, h, w = img.data.shape
    fx = p.data[:, 0] * w - 0.5
    fy = p.data[:, 1] * h - 0.5
    x0 = np.floor(fx).astype(np.int64)
    y0 = np.floor(fy).astype(np.int64)
    wx = fx - x0
    wy = fy - y0
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)

    tl = img.data[:, y0c, x0c]
    tr = img.data[:, y0c, x1c]
    bl = img.data[:, y1c, x0c]
    br = img.data[:, y1c, x1c]
    out_data = (tl * (1 - wx) + tr * wx) * (1 - wy) + (bl * (1 - wx) + br * wx) * wy

    def bwd(out):
        g = out.grad  # (C, P)
        if img.requires_grad:
            gimg = np.zeros_like(img.data)
            np.add.at(gimg, (slice(None), y0c, x0c), g * (1 - wx) * (1 - wy))
            np.add.at(gimg, (slice(None), y0c, x1c), g * wx * (1 - wy))
            np.add.at(gimg, (slice(None), y1c, x0c), g * (1 - wx) * wy)
            np.add.at(gimg, (slice(None), y1c, x1c), g * wx * wy)
            _accum(img, gimg)
        if p.requires_grad:
            dwx = (tr - tl) * (1 - wy) + (br - bl) * wy
            dwy = (bl - tl) * (1 - wx) + (br - tr) * wx
            gp = np.stack(
                [(g * dwx).sum(axis=0) * w, (g * dwy).sum(axis=0) * h], axis=1
            )
            _accum(p, gp)

    sampled = Tensor._from_op(out_data, (img, p), bwd)
    return sampled.reshape(c) if single else sampled


def _output_lift(cfg: GridConfig, out_h: int, out_w: int) -> np.ndarray:
    key = (cfg.m, cfg.n, out_h, out_w)
    if key not in _OUT_LIFTS:
        xs = (np.arange(out_w) + 0.5) / out_w
        ys = (np.arange(out_h) + 0.5) / out_h
        xg, yg = np.meshgrid(xs, ys)
        probes = np.stack([xg.reshape(-1), yg.reshape(-1)], axis=1)
        _OUT_LIFTS[key] = lift_points(_system(cfg).centers, probes)
    return _OUT_LIFTS[key]


def rectify_image(img, grid: ControlGrid, out_hw: tuple[int, int] = RECTIFIED_SIZE) -> Tensor:
    """Warp the source image onto the rectified plane.

    Every output pixel center is mapped through the spline and sampled
    bilinearly; the result is differentiable with respect to the control
    grid (and the image).  Returns a (C, out_h, out_w) tensor.
    """
    if isinstance(img, Image):
        img = Tensor(img.to_chw())
    out_h, out_w = out_hw
    mapping = solve_tps(TargetGrid.from_config(grid.cfg), grid)
    lift = Tensor(_output_lift(grid.cfg, out_h, out_w))
    src_pts = matmul(lift, mapping.T)
    sampled = sample_bilinear(img, src_pts)
    return sampled.reshape(img.data.shape[0], out_h, out_w)
