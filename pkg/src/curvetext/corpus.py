"""Deterministic synthetic curved/perspective text images.

Glyphs are procedural 5x7 bitmaps (no font files), rasterized dark on a
light background at 36x128, then warped by a per-sample distortion and
sprinkled with seeded Gaussian noise.  Everything derives from the
sample spec's seed, so regeneration is bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .imaging import Image, sample_bilinear_np

CANVAS_H, CANVAS_W = 36, 128
GLYPH_SCALE = 2          # 5x7 bitmap -> 10x14 pixels
GLYPH_ADVANCE = 12       # glyph width plus spacing
MAX_LABEL_LEN = 8

_GLYPHS = {
    "0": ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    "1": ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    "2": ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    "3": ("11111", "00010", "00100", "00010", "00001", "10001", "01110"),
    "4": ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    "5": ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    "6": ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    "7": ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    "8": ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    "9": ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
    "a": ("01110", "10001", "10001", "11111", "10001", "10001", "10001"),
    "b": ("11110", "10001", "10001", "11110", "10001", "10001", "11110"),
    "c": ("01110", "10001", "10000", "10000", "10000", "10001", "01110"),
    "d": ("11100", "10010", "10001", "10001", "10001", "10010", "11100"),
    "e": ("11111", "10000", "10000", "11110", "10000", "10000", "11111"),
    "f": ("11111", "10000", "10000", "11110", "10000", "10000", "10000"),
}

SYMBOLS = tuple(sorted(_GLYPHS))

BACKGROUND = 0.88
INK = 0.10


class GlyphError(ValueError):
    """Raised for labels containing characters without a glyph."""


@dataclass(frozen=True)
class Curve:
    amplitude: float  # pixels of vertical baseline swing
    phase: float


@dataclass(frozen=True)
class Perspective:
    jitter: float  # max corner displacement in pixels


@dataclass(frozen=True)
class Rotation:
    angle: float  # degrees, counterclockwise


@dataclass(frozen=True)
class SampleSpec:
    """Everything needed to regenerate one sample bit-identically."""

    label: str
    distortion: Curve | Perspective | Rotation | None = None
    noise: float = 0.0
    seed: int = 0


def _rasterize(label: str) -> np.ndarray:
    if not 1 <= len(label) <= MAX_LABEL_LEN:
        raise GlyphError(f"label length must be 1..{MAX_LABEL_LEN}, got {len(label)}")
    canvas = np.full((CANVAS_H, CANVAS_W), BACKGROUND)
    gw, gh = 5 * GLYPH_SCALE, 7 * GLYPH_SCALE
    total = len(label) * GLYPH_ADVANCE - (GLYPH_ADVANCE - gw)
    x = max((CANVAS_W - total) // 2, 2)
    y = (CANVAS_H - gh) // 2
    for ch in label:
        rows = _GLYPHS.get(ch)
        if rows is None:
            raise GlyphError(f"no glyph for character {ch!r}")
        for r, row in enumerate(rows):
            for c, bit in enumerate(row):
                if bit == "1":
                    r0, c0 = y + r * GLYPH_SCALE, x + c * GLYPH_SCALE
                    canvas[r0 : r0 + GLYPH_SCALE, c0 : c0 + GLYPH_SCALE] = INK
        x += GLYPH_ADVANCE
    return canvas


def _homography_from_corners(dst: np.ndarray, src: np.ndarray) -> np.ndarray:
    # solve the 8-dof projective map sending each dst corner to its src corner
    rows = []
    rhs = []
    for (xd, yd), (xs, ys) in zip(dst, src):
        rows.append([xd, yd, 1, 0, 0, 0, -xd * xs, -yd * xs])
        rhs.append(xs)
        rows.append([0, 0, 0, xd, yd, 1, -xd * ys, -yd * ys])
        rhs.append(ys)
    h8 = np.linalg.solve(np.asarray(rows, dtype=np.float64), np.asarray(rhs, dtype=np.float64))
    return np.append(h8, 1.0).reshape(3, 3)


def _warp(flat: np.ndarray, spec: SampleSpec) -> np.ndarray:
    h, w = flat.shape
    cg, rg = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    d = spec.distortion
    if d is None:
        return flat
    if isinstance(d, Curve):
        if d.amplitude == 0.0:
            return flat
        src_r = rg - d.amplitude * np.sin(np.pi * cg / w + d.phase)
        src_c = cg
    elif isinstance(d, Rotation):
        th = np.deg2rad(d.angle)
        cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
        dc, dr = cg - cx, rg - cy
        src_c = cx + np.cos(th) * dc - np.sin(th) * dr
        src_r = cy + np.sin(th) * dc + np.cos(th) * dr
    elif isinstance(d, Perspective):
        rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 0xC0)))
        corners = np.array([[0, 0], [w - 1, 0], [w - 1, h - 1], [0, h - 1]], dtype=np.float64)
        src_corners = corners + rng.uniform(-d.jitter, d.jitter, size=(4, 2))
        hm = _homography_from_corners(corners, src_corners)
        ones = np.ones_like(cg)
        denom = hm[2, 0] * cg + hm[2, 1] * rg + hm[2, 2] * ones
        src_c = (hm[0, 0] * cg + hm[0, 1] * rg + hm[0, 2]) / denom
        src_r = (hm[1, 0] * cg + hm[1, 1] * rg + hm[1, 2]) / denom
    else:
        raise TypeError(f"unknown distortion {d!r}")
    xn = (src_c + 0.5) / w
    yn = (src_r + 0.5) / h
    return sample_bilinear_np(flat[None], xn, yn)[0]


def render(spec: SampleSpec) -> tuple[Image, str]:
    """Rasterize, distort and noise one sample; bit-identical per spec."""
    canvas = _rasterize(spec.label)
    canvas = _warp(canvas, spec)
    if spec.noise > 0.0:
        rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 0x7E)))
        canvas = canvas + rng.normal(0.0, spec.noise, size=canvas.shape)
    return Image(np.clip(canvas, 0.0, 1.0)), spec.label


DEFAULT_MIX = {"curve": 0.5, "none": 0.5}


@dataclass(frozen=True)
class SplitConfig:
    """Knobs for generated splits; defaults give moderate distortions."""

    min_len: int = 1
    max_len: int = 5
    noise: float = 0.02
    curve_amplitude: tuple[float, float] = (3.0, 7.0)
    perspective_jitter: tuple[float, float] = (2.0, 5.0)
    rotation_angle: tuple[float, float] = (-12.0, 12.0)
    mix: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_MIX))


def _sample_spec(rng: np.random.Generator, cfg: SplitConfig, seed: int) -> SampleSpec:
    kinds = sorted(cfg.mix)
    fracs = np.array([cfg.mix[k] for k in kinds], dtype=np.float64)
    fracs = fracs / fracs.sum()
    kind = kinds[int(rng.choice(len(kinds), p=fracs))]
    length = int(rng.integers(cfg.min_len, cfg.max_len + 1))
    label = "".join(SYMBOLS[int(i)] for i in rng.integers(0, len(SYMBOLS), size=length))
    if kind == "none":
        dist = None
    elif kind == "curve":
        dist = Curve(
            amplitude=float(rng.uniform(*cfg.curve_amplitude)),
            phase=float(rng.uniform(0.0, 2.0 * np.pi)),
        )
    elif kind == "perspective":
        dist = Perspective(jitter=float(rng.uniform(*cfg.perspective_jitter)))
    elif kind == "rotation":
        dist = Rotation(angle=float(rng.uniform(*cfg.rotation_angle)))
    else:
        raise ValueError(f"unknown distortion kind {kind!r} in mix")
    return SampleSpec(label=label, distortion=dist, noise=cfg.noise, seed=seed)


def generate_split(out_dir: str | Path, n: int, seed: int, cfg: SplitConfig | None = None) -> Path:
    """Write ``n`` samples and a manifest under ``out_dir``.

    Per-sample streams are spawned from the split seed, so different
    split seeds partition the sample space and identical arguments
    reproduce identical bytes.  Returns the manifest path.
    """
    from .pnm import write_pnm

    if n < 1:
        raise ValueError("need at least one sample")
    cfg = cfg or SplitConfig()
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    lines = []
    for i in range(n):
        child = np.random.SeedSequence((seed, i))
        sample_seed = int(child.generate_state(1)[0])
        rng = np.random.default_rng(child)
        spec = _sample_spec(rng, cfg, sample_seed)
        img, label = render(spec)
        rel = f"images/{i:06d}.pgm"
        write_pnm(out_dir / rel, img)
        lines.append(f"{rel}\t{label}\n")
    manifest = out_dir / "manifest.tsv"
    manifest.write_text("".join(lines), encoding="utf-8")
    return manifest
