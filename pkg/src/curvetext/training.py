"""Model assembly, SGD training loop, evaluation metric and checkpoints."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import ParameterStore, Tensor, no_grad
from .checkpoint import apply_entries, meta_entries, store_entries
from .corpus import CANVAS_H, CANVAS_W
from .decoder import BidiDecoder, DecoderConfig, Vocabulary
from .encoder import EncoderConfig, RecognitionEncoder
from .imaging import Image
from .pnm import read_pnm
from .poly_grid import GridConfig
from .rectifier import RectifierNet, RectNetConfig

FULL_UNITS = (3, 4, 6, 6, 3)   # ~53 conv layers with stem and projections
DESK_UNITS = (1, 1, 1, 1, 1)


class TrainingDivergedError(RuntimeError):
    """Raised when the loss turns non-finite; message carries diagnostics."""


class ManifestError(ValueError):
    """Raised for malformed manifest lines."""


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters; desk-scale defaults are the tested configuration."""

    lam: float = 0.7
    batch_size: int = 8           # 64 at full scale
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 5.0
    lr_decay_every: int = 0       # 0 disables step decay
    lr_decay_factor: float = 0.5
    # the warp branch trains slower and starts frozen: full-rate updates let
    # the control grid collapse against the clamp (a blank-image local
    # optimum) before recognition learns to read
    rect_lr_scale: float = 0.1
    rect_warmup_steps: int = 500
    steps: int = 2000
    seed: int = 0
    scale: int = 4
    grid: tuple[int, int, int] = (3, 10, 4)   # (M, N, W)
    beam_k: int = 5
    check_liveness: bool = True


class Model:
    """Rectifier, encoder and bidirectional decoder over one parameter store."""

    def __init__(
        self,
        vocab: Vocabulary,
        scale: int = 4,
        grid: tuple[int, int, int] = (3, 10, 4),
        init_seed: int = 0,
        units_per_block: tuple[int, ...] | None = None,
    ):
        self.vocab = vocab
        self.scale = scale
        self.grid = grid
        self.init_seed = init_seed
        self.units = tuple(units_per_block) if units_per_block else (
            FULL_UNITS if scale == 1 else DESK_UNITS
        )
        self.store = ParameterStore()
        rng = np.random.default_rng(np.random.SeedSequence((init_seed, 0x11)))
        grid_cfg = GridConfig(*grid)
        self.rectifier = RectifierNet(RectNetConfig(grid=grid_cfg, scale=scale), self.store, rng)
        enc_cfg = EncoderConfig(units_per_block=self.units, scale=scale)
        self.encoder = RecognitionEncoder(enc_cfg, self.store, rng)
        dec_cfg = DecoderConfig(
            feature_dim=enc_cfg.feature_dim,
            hidden=max(1, 256 // scale),
            attn_units=max(1, 256 // scale),
            embed_dim=max(1, 512 // scale),
        )
        self.decoder = BidiDecoder(dec_cfg, vocab, self.store, rng)

    # ------------------------------------------------------------------
    def features_for_batch(self, images: list[Image]) -> Tensor:
        rectified, _ = self.rectifier.rectify_batch(images)
        return self.encoder.encode(rectified)

    def loss_on_batch(self, images: list[Image], labels: list[str], lam: float) -> Tensor:
        h = self.features_for_batch(images)
        return self.decoder.teacher_forced_loss(h, labels, lam)

    def recognize_image(self, img: Image, k: int = 5) -> str:
        with no_grad():
            h = self.features_for_batch([img])
        return self.decoder.recognize(h, k)

    # ------------------------------------------------------------------
    def meta(self) -> dict[str, np.ndarray]:
        return {
            "init_seed": np.array([self.init_seed], dtype=np.float64),
            "scale": np.array([self.scale], dtype=np.float64),
            "grid": np.array(self.grid, dtype=np.float64),
            "units": np.array(self.units, dtype=np.float64),
            "vocab": np.array([ord(c) for c in self.vocab.symbols], dtype=np.float64),
        }

    def checkpoint_entries(self) -> dict[str, np.ndarray]:
        return store_entries(self.store, self.meta())

    @classmethod
    def from_entries(cls, entries: dict[str, np.ndarray]) -> "Model":
        meta = meta_entries(entries)
        missing = {"init_seed", "scale", "grid", "units", "vocab"} - set(meta)
        if missing:
            raise ValueError(f"checkpoint lacks model metadata: {sorted(missing)}")
        vocab = Vocabulary(tuple(chr(int(c)) for c in meta["vocab"]))
        model = cls(
            vocab,
            scale=int(meta["scale"][0]),
            grid=tuple(int(v) for v in meta["grid"]),
            init_seed=int(meta["init_seed"][0]),
            units_per_block=tuple(int(v) for v in meta["units"]),
        )
        apply_entries(model.store, entries)
        return model


# ----------------------------------------------------------------------
# manifests
# ----------------------------------------------------------------------

def load_manifest(path: str | Path) -> list[tuple[Path, str]]:
    """Parse lines of "relative/path<TAB>label"; blank lines are skipped."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    base = path.parent
    samples = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        if "\t" not in line:
            raise ManifestError(f"{path}:{lineno}: expected 'path<TAB>label'")
        rel, label = line.split("\t", 1)
        if "\t" in label:
            raise ManifestError(f"{path}:{lineno}: label contains a TAB")
        samples.append((base / rel, label))
    return samples


def _load_images(samples: list[tuple[Path, str]]) -> list[tuple[Image, str]]:
    return [(read_pnm(p), label) for p, label in samples]


# ----------------------------------------------------------------------
# optimizer and training loop
# ----------------------------------------------------------------------

class Adam:
    """Adam with global-norm clipping, stepwise lr decay and a rectifier
    schedule (frozen for the warmup, then a reduced rate)."""

    def __init__(self, store: ParameterStore, cfg: TrainConfig):
        self.store = store
        self.cfg = cfg
        self.m = {name: np.zeros_like(t.data) for name, t in store.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in store.items()}

    def lr_at(self, step: int) -> float:
        if self.cfg.lr_decay_every <= 0:
            return self.cfg.lr
        return self.cfg.lr * self.cfg.lr_decay_factor ** (step // self.cfg.lr_decay_every)

    def rect_rate(self, step: int, lr: float) -> float:
        if step < self.cfg.rect_warmup_steps:
            return 0.0
        return lr * self.cfg.rect_lr_scale

    def step(self, step_idx: int) -> None:
        cfg = self.cfg
        sq = 0.0
        for _, t in self.store.items():
            sq += float((t.grad * t.grad).sum())
        norm = np.sqrt(sq)
        clip = min(1.0, cfg.clip_norm / norm) if norm > 0 else 1.0
        lr = self.lr_at(step_idx)
        t_ = step_idx + 1
        bc1 = 1.0 - cfg.beta1**t_
        bc2 = 1.0 - cfg.beta2**t_
        for name, t in self.store.items():
            g = t.grad * clip
            m = self.m[name]
            v = self.v[name]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            rate = self.rect_rate(step_idx, lr) if name.startswith("rect.") else lr
            if rate == 0.0:
                continue
            t.data -= rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)


@dataclass
class TrainResult:
    losses: list[float]
    steps: int
    entries: dict[str, np.ndarray] = field(repr=False, default_factory=dict)


def train(
    model: Model,
    manifest: str | Path,
    cfg: TrainConfig,
    on_step=None,
) -> TrainResult:
    """Minibatch training on the bidirectional loss; deterministic given the seed.

    ``on_step(step, loss)`` may return True to stop early (used by
    convergence probes); the loss log always covers the executed steps.
    """
    samples = _load_images(load_manifest(manifest))
    for _, label in samples:
        model.vocab.encode(label)  # fail fast on out-of-vocabulary labels
    batch_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0xBA)))
    opt = Adam(model.store, cfg)
    losses: list[float] = []
    step = 0
    for step in range(cfg.steps):
        idx = batch_rng.integers(0, len(samples), size=cfg.batch_size)
        images = [samples[i][0] for i in idx]
        labels = [samples[i][1] for i in idx]
        loss = model.loss_on_batch(images, labels, cfg.lam)
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingDivergedError(
                f"non-finite loss {value} at step {step}, batch ids {idx.tolist()}"
            )
        model.store.zero_grad()
        loss.backward()
        if cfg.check_liveness:
            dead = [name for name, t in model.store.items() if t.grad is None]
            if dead:
                raise RuntimeError(f"parameters without gradients after backward: {dead[:5]}")
        opt.step(step)
        losses.append(value)
        if on_step is not None and on_step(step, value):
            break
    return TrainResult(losses=losses, steps=len(losses), entries=model.checkpoint_entries())


# ----------------------------------------------------------------------
# evaluation
# ----------------------------------------------------------------------

_ALNUM = re.compile(r"[^a-z0-9]")


def normalize_text(s: str) -> str:
    """Case-insensitive, letters-and-digits-only comparison form."""
    return _ALNUM.sub("", s.lower())


@dataclass
class EvalResult:
    accuracy: float
    rows: list[tuple[str, str, str, bool]]  # (id, gt, pred, match)


def evaluate(model: Model, manifest: str | Path, k: int = 5) -> EvalResult:
    """Word accuracy under the case/punctuation-insensitive match."""
    samples = load_manifest(manifest)
    rows = []
    hits = 0
    for path, label in samples:
        sid = path.name
        try:
            pred = model.recognize_image(read_pnm(path), k)
        except Exception:
            rows.append((sid, label, "", False))
            continue
        match = normalize_text(pred) == normalize_text(label)
        hits += int(match)
        rows.append((sid, label, pred, match))
    acc = hits / len(rows) if rows else 0.0
    return EvalResult(accuracy=acc, rows=rows)
