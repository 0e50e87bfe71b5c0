"""Residual CNN plus stacked bidirectional LSTMs for sequence features.

The CNN stem and five residual blocks reduce a 32x100 image to a 1-pixel
high feature map whose width is the sequence length (25 at the default
geometry).  Each residual unit is a 1x1 conv followed by a 3x3 conv with
a projected shortcut where shapes change; the first unit of a block
carries the block's downsampling stride.  Convolutions use replicated
border padding so horizontally constant inputs stay column-constant.
Two BiLSTM layers then mix the columns; each step concatenates the
forward and backward hidden states.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    ParameterStore,
    ShapeError,
    Tensor,
    concat,
    conv2d,
    lstm_cell,
    relu,
    relu_uniform_init,
    stack,
    uniform_init,
)


@dataclass(frozen=True)
class EncoderConfig:
    """Feature extractor geometry; ``scale`` divides all widths."""

    in_hw: tuple[int, int] = (32, 100)
    in_channels: int = 1
    stem_channels: int = 32
    block_channels: tuple[int, ...] = (64, 128, 256, 512, 512)
    block_strides: tuple[tuple[int, int], ...] = ((2, 2), (2, 2), (2, 1), (2, 1), (2, 1))
    units_per_block: tuple[int, ...] = (3, 4, 6, 6, 3)
    lstm_hidden: int = 256
    lstm_layers: int = 2
    scale: int = 1

    def __post_init__(self):
        if not (len(self.block_channels) == len(self.block_strides) == len(self.units_per_block)):
            raise ValueError("block channel/stride/unit lists must have equal length")
        if self.scale < 1:
            raise ValueError("scale must be >= 1")
        h, w = self.in_hw
        for sh, sw in self.block_strides:
            h = (h - 1) // sh + 1
            w = (w - 1) // sw + 1
        if h != 1:
            raise ValueError(
                f"block strides must collapse height to 1, got {h} from input {self.in_hw}"
            )
        object.__setattr__(self, "_seq_len", w)

    @property
    def seq_len(self) -> int:
        return self._seq_len

    def channel(self, c: int) -> int:
        return max(1, c // self.scale)

    @property
    def hidden(self) -> int:
        return max(1, self.lstm_hidden // self.scale)

    @property
    def feature_dim(self) -> int:
        return 2 * self.hidden


class RecognitionEncoder:
    """CNN + BiLSTM encoder producing one feature vector per column."""

    def __init__(self, cfg: EncoderConfig, store: ParameterStore, rng: np.random.Generator, prefix: str = "encoder"):
        self.cfg = cfg
        self.store = store
        self.prefix = prefix
        self._build(rng)

    def _add_conv(self, name: str, out_ch: int, in_ch: int, k: int, rng) -> tuple[Tensor, Tensor]:
        w = self.store.add(f"{name}.weight", relu_uniform_init(rng, (out_ch, in_ch, k, k), fan_in=in_ch * k * k))
        b = self.store.add(f"{name}.bias", np.zeros(out_ch))
        return w, b

    def _build(self, rng: np.random.Generator) -> None:
        cfg = self.cfg
        p = self.prefix
        self.stem = self._add_conv(f"{p}.stem", cfg.channel(cfg.stem_channels), cfg.in_channels, 3, rng)
        self.blocks = []
        in_ch = cfg.channel(cfg.stem_channels)
        for bi, (ch, stride, units) in enumerate(
            zip(cfg.block_channels, cfg.block_strides, cfg.units_per_block)
        ):
            out_ch = cfg.channel(ch)
            block = {"stride": stride, "units": [], "proj": None}
            if (in_ch != out_ch) or stride != (1, 1):
                block["proj"] = self._add_conv(f"{p}.block{bi + 1}.proj", out_ch, in_ch, 1, rng)
            for ui in range(units):
                ustride = stride if ui == 0 else (1, 1)
                uin = in_ch if ui == 0 else out_ch
                c1 = self._add_conv(f"{p}.block{bi + 1}.unit{ui + 1}.conv1", out_ch, uin, 1, rng)
                c3 = self._add_conv(f"{p}.block{bi + 1}.unit{ui + 1}.conv3", out_ch, out_ch, 3, rng)
                block["units"].append((c1, c3, ustride))
            self.blocks.append(block)
            in_ch = out_ch

        self.lstms = []
        feat_in = in_ch
        for li in range(cfg.lstm_layers):
            layer = {}
            for d in ("fwd", "bwd"):
                w_ih = self.store.add(
                    f"{p}.lstm{li + 1}.{d}.w_ih",
                    uniform_init(rng, (4 * cfg.hidden, feat_in), fan_in=feat_in, gain=2.0),
                )
                w_hh = self.store.add(
                    f"{p}.lstm{li + 1}.{d}.w_hh",
                    uniform_init(rng, (4 * cfg.hidden, cfg.hidden), fan_in=cfg.hidden, gain=2.0),
                )
                b = self.store.add(f"{p}.lstm{li + 1}.{d}.b", np.zeros(4 * cfg.hidden))
                layer[d] = (w_ih, w_hh, b)
            self.lstms.append(layer)
            feat_in = cfg.feature_dim

    # ------------------------------------------------------------------
    def cnn_features(self, x: Tensor) -> Tensor:
        """Run stem and residual blocks: (B, C, H, W) -> (B, C', 1, W')."""
        if x.data.ndim != 4 or x.data.shape[1] != self.cfg.in_channels:
            raise ShapeError(f"encoder input must be (B,{self.cfg.in_channels},H,W), got {x.shape}")
        if x.data.shape[2:] != self.cfg.in_hw:
            raise ShapeError(f"encoder expects {self.cfg.in_hw} input, got {x.data.shape[2:]}")
        h = relu(conv2d(x - 0.5, *self.stem, stride=(1, 1), padding=(1, 1), pad_mode="edge"))
        for block in self.blocks:
            for ui, (c1, c3, ustride) in enumerate(block["units"]):
                inner = relu(conv2d(h, *c1, stride=(1, 1), padding=(0, 0)))
                inner = conv2d(inner, *c3, stride=ustride, padding=(1, 1), pad_mode="edge")
                if ui == 0 and block["proj"] is not None:
                    short = conv2d(h, *block["proj"], stride=ustride, padding=(0, 0))
                else:
                    short = h
                h = relu(inner + short)
        return h

    def bilstm(self, seq: list[Tensor]) -> list[Tensor]:
        """Apply the stacked BiLSTMs to a list of per-step (B, D) tensors."""
        cfg = self.cfg
        bsz = seq[0].data.shape[0]
        for layer in self.lstms:
            zeros = Tensor(np.zeros((bsz, cfg.hidden)))
            hf, cf = zeros, zeros
            fwd_states = []
            for x_t in seq:
                hf, cf = lstm_cell(x_t, hf, cf, *layer["fwd"])
                fwd_states.append(hf)
            hb, cb = zeros, zeros
            bwd_states: list[Tensor] = [None] * len(seq)
            for t in range(len(seq) - 1, -1, -1):
                hb, cb = lstm_cell(seq[t], hb, cb, *layer["bwd"])
                bwd_states[t] = hb
            seq = [concat([f, b], axis=1) for f, b in zip(fwd_states, bwd_states)]
        return seq

    def encode(self, x: Tensor) -> Tensor:
        """Feature sequence (B, seq_len, feature_dim) for a (B, C, H, W) batch."""
        feats = self.cnn_features(x)
        bsz, ch, fh, fw = feats.data.shape
        if fh != 1:
            raise ShapeError(f"CNN features did not collapse to height 1: {feats.shape}")
        cols = feats.reshape(bsz, ch, fw)
        seq = [cols[:, :, t] for t in range(fw)]
        seq = self.bilstm(seq)
        return stack(seq, axis=1)
