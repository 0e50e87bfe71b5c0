"""Central finite-difference verification of every analytic gradient.

Each suite builds small random problems, compares backward-pass
gradients against (f(x+h) - f(x-h)) / 2h elementwise, and reports the
worst relative error max|a - n| / max(|a|, |n|, 1).  Step h = 1e-5 in
float64 keeps truncation and roundoff both far below the thresholds.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Tensor, backward
from .decoder import BidiDecoder, DecoderConfig, Direction, Vocabulary
from .encoder import EncoderConfig, RecognitionEncoder
from .imaging import Image
from .poly_grid import GridConfig, build_grid
from .rectifier import RectifierNet, RectNetConfig
from .tps import TargetGrid, map_point, rectify_image, sample_bilinear, solve_tps

FD_STEP = 1e-5


def finite_diff_check(
    f: Callable[[], Tensor],
    wrt: list[Tensor],
    h: float = FD_STEP,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Worst relative error between analytic and numeric gradients.

    ``f`` rebuilds the scalar loss from the current ``.data`` of the
    tensors in ``wrt``.  With ``max_entries`` set, a random subset of
    each tensor's entries is probed (for expensive forward passes).
    """
    out = f()
    for t in wrt:
        t.grad = None
    backward(out)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in wrt]

    worst = 0.0
    for t, ga in zip(wrt, analytic):
        n = t.data.size
        if max_entries is not None and n > max_entries:
            if rng is None:
                rng = np.random.default_rng(0)
            idxs = rng.choice(n, size=max_entries, replace=False)
        else:
            idxs = range(n)
        flat = t.data.reshape(-1)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + h
            fp = f().item()
            flat[i] = orig - h
            fm = f().item()
            flat[i] = orig
            num = (fp - fm) / (2.0 * h)
            a = ga.reshape(-1)[i]
            err = abs(a - num) / max(abs(a), abs(num), 1.0)
            worst = max(worst, err)
    return worst


def _weighted_sum(t: Tensor, w: np.ndarray) -> Tensor:
    return (t * Tensor(w)).sum()


# ----------------------------------------------------------------------
# per-module suites
# ----------------------------------------------------------------------

def suite_tensor_autodiff(seed: int = 0, rounds: int = 20) -> float:
    worst = 0.0
    for r in range(rounds):
        rng = np.random.default_rng(np.random.SeedSequence((seed, r)))

        x = Tensor(rng.uniform(-1, 1, (2, 3, 8, 8)), requires_grad=True)
        w = Tensor(rng.uniform(-0.5, 0.5, (4, 3, 3, 3)), requires_grad=True)
        b = Tensor(rng.uniform(-0.5, 0.5, 4), requires_grad=True)
        wsum = rng.uniform(-1, 1, (2, 4, 8, 8))
        worst = max(
            worst,
            finite_diff_check(
                lambda: _weighted_sum(ad.conv2d(x, w, b, (1, 1), (1, 1)), wsum), [x, w, b]
            ),
        )
        wsum2 = rng.uniform(-1, 1, (2, 4, 4, 4))
        worst = max(
            worst,
            finite_diff_check(
                lambda: _weighted_sum(ad.conv2d(x, w, b, (2, 2), (1, 1), pad_mode="edge"), wsum2),
                [x, w, b],
            ),
        )

        # pooling: keep window values separated so FD never crosses a tie
        base = rng.uniform(-1, 1, (1, 2, 6, 6))
        base += 1e-3 * np.arange(base.size).reshape(base.shape)
        xp = Tensor(base, requires_grad=True)
        wsump = rng.uniform(-1, 1, (1, 2, 3, 3))
        worst = max(
            worst, finite_diff_check(lambda: _weighted_sum(ad.maxpool2(xp), wsump), [xp])
        )

        xl = Tensor(rng.uniform(-1, 1, (3, 5)), requires_grad=True)
        wl = Tensor(rng.uniform(-1, 1, (4, 5)), requires_grad=True)
        bl = Tensor(rng.uniform(-1, 1, 4), requires_grad=True)
        wsuml = rng.uniform(-1, 1, (3, 4))
        worst = max(
            worst,
            finite_diff_check(lambda: _weighted_sum(ad.linear(xl, wl, bl), wsuml), [xl, wl, bl]),
        )

        v = rng.uniform(-2, 2, 7)
        v = v + np.sign(v) * 0.05  # keep relu inputs away from the kink
        xv = Tensor(v, requires_grad=True)
        wv = rng.uniform(-1, 1, 7)
        for op in (ad.relu, ad.tanh, ad.sigmoid):
            worst = max(worst, finite_diff_check(lambda op=op: _weighted_sum(op(xv), wv), [xv]))
        worst = max(
            worst, finite_diff_check(lambda: _weighted_sum(ad.softmax(xv, axis=0), wv), [xv])
        )

        xg = Tensor(rng.uniform(-1, 1, (2, 5)), requires_grad=True)
        sg = Tensor(rng.uniform(-1, 1, (2, 4)), requires_grad=True)
        wih = Tensor(rng.uniform(-0.7, 0.7, (12, 5)), requires_grad=True)
        whh = Tensor(rng.uniform(-0.7, 0.7, (12, 4)), requires_grad=True)
        bg = Tensor(rng.uniform(-0.5, 0.5, 12), requires_grad=True)
        wsumg = rng.uniform(-1, 1, (2, 4))
        worst = max(
            worst,
            finite_diff_check(
                lambda: _weighted_sum(ad.gru_cell(xg, sg, wih, whh, bg), wsumg),
                [xg, sg, wih, whh, bg],
            ),
        )

        hl = Tensor(rng.uniform(-1, 1, (2, 4)), requires_grad=True)
        cl = Tensor(rng.uniform(-1, 1, (2, 4)), requires_grad=True)
        wih4 = Tensor(rng.uniform(-0.7, 0.7, (16, 5)), requires_grad=True)
        whh4 = Tensor(rng.uniform(-0.7, 0.7, (16, 4)), requires_grad=True)
        bg4 = Tensor(rng.uniform(-0.5, 0.5, 16), requires_grad=True)

        def lstm_loss():
            hn, cn = ad.lstm_cell(xg, hl, cl, wih4, whh4, bg4)
            return _weighted_sum(hn, wsumg) + _weighted_sum(cn, wsumg[::-1])

        worst = max(worst, finite_diff_check(lstm_loss, [xg, hl, cl, wih4, whh4, bg4]))

        table = Tensor(rng.uniform(-1, 1, (6, 3)), requires_grad=True)
        wsume = rng.uniform(-1, 1, (4, 3))
        worst = max(
            worst,
            finite_diff_check(
                lambda: _weighted_sum(ad.embedding_lookup(table, np.array([2, 4, 2, 0])), wsume),
                [table],
            ),
        )

        logits = Tensor(rng.uniform(-2, 2, 7), requires_grad=True)
        worst = max(worst, finite_diff_check(lambda: ad.cross_entropy(logits, 3), [logits]))
        logits2 = Tensor(rng.uniform(-2, 2, (3, 5)), requires_grad=True)
        wsumc = rng.uniform(-1, 1, 3)
        worst = max(
            worst,
            finite_diff_check(
                lambda: _weighted_sum(ad.cross_entropy(logits2, np.array([1, 4, 0])), wsumc),
                [logits2],
            ),
        )
    return worst


def suite_poly_grid(seed: int = 0, rounds: int = 5) -> float:
    cfg = GridConfig(3, 10, 4)
    worst = 0.0
    for r in range(rounds):
        rng = np.random.default_rng(np.random.SeedSequence((seed, r)))
        # biases and small coefficients keep the y values clear of the clamp
        raw = np.concatenate(
            [
                rng.uniform(-2, 2, cfg.m * cfg.n),
                rng.uniform(0.3, 0.7, cfg.m),
                rng.uniform(-0.05, 0.05, cfg.w),
            ]
        )
        rt = Tensor(raw, requires_grad=True)
        wsum = rng.uniform(-1, 1, (cfg.m, cfg.n, 2))
        worst = max(
            worst,
            finite_diff_check(lambda: _weighted_sum(build_grid(cfg, rt).points, wsum), [rt]),
        )
    return worst


def _safe_grid_values(rng: np.random.Generator, cfg: GridConfig) -> np.ndarray:
    from .poly_grid import target_points

    return target_points(cfg).reshape(-1, 2) + rng.uniform(-0.15, 0.15, (cfg.num_points, 2))


def _smooth_image(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Low-frequency field: bilinear-sampling kinks scale with the image's
    second differences, so smooth data keeps finite differences honest."""
    rows = np.arange(h)[:, None]
    cols = np.arange(w)[None, :]
    img = np.full((h, w), 0.5)
    for _ in range(4):
        fr, fc = rng.uniform(0.5, 1.5, 2)
        pr, pc = rng.uniform(0, 2 * np.pi, 2)
        img += 0.1 * np.sin(2 * np.pi * fr * rows / h + pr) * np.cos(2 * np.pi * fc * cols / w + pc)
    return np.clip(img, 0.0, 1.0)


def suite_tps_warp(seed: int = 0, rounds: int = 4) -> float:
    cfg = GridConfig(3, 10, 4)
    tg = TargetGrid.from_config(cfg)
    worst = 0.0
    for r in range(rounds):
        rng = np.random.default_rng(np.random.SeedSequence((seed, r)))
        vals = Tensor(_safe_grid_values(rng, cfg), requires_grad=True)
        wsum_t = rng.uniform(-1, 1, (cfg.num_points + 3, 2))
        worst = max(
            worst,
            finite_diff_check(lambda: _weighted_sum(solve_tps(tg, vals).T, wsum_t), [vals]),
        )

        probes = rng.uniform(0.1, 0.9, (6, 2))
        wsum_p = rng.uniform(-1, 1, (6, 2))
        worst = max(
            worst,
            finite_diff_check(
                lambda: _weighted_sum(map_point(solve_tps(tg, vals), probes), wsum_p), [vals]
            ),
        )

        img = Tensor(rng.uniform(0, 1, (1, 9, 13)), requires_grad=True)
        # offsets keep sample points away from the integer lattice
        pts = Tensor(rng.uniform(0.15, 0.85, (5, 2)) + 0.003, requires_grad=True)
        wsum_s = rng.uniform(-1, 1, (1, 5))
        worst = max(
            worst,
            finite_diff_check(lambda: _weighted_sum(sample_bilinear(img, pts), wsum_s), [img, pts]),
        )

        grid_vals = Tensor(_safe_grid_values(rng, cfg), requires_grad=True)
        img2 = Tensor(_smooth_image(rng, 12, 20)[None], requires_grad=True)
        wsum_r = rng.uniform(-1, 1, (1, 8, 10))

        def rect_loss():
            from .poly_grid import grid_from_points

            grid = grid_from_points(cfg, grid_vals.reshape(cfg.m, cfg.n, 2))
            return _weighted_sum(rectify_image(img2, grid, (8, 10)), wsum_r)

        # smaller step: a control-point move sweeps 80 sample points, and the
        # probability one crosses a sampling-lattice kink scales with h
        worst = max(worst, finite_diff_check(rect_loss, [grid_vals, img2], h=1e-6, max_entries=30,
                                             rng=np.random.default_rng(seed + r)))
    return worst


def _perturbed_rectifier(seed: int) -> tuple[RectifierNet, ParameterStore]:
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xFD)))
    store = ParameterStore()
    cfg = RectNetConfig(grid=GridConfig(3, 10, 4), scale=8)
    net = RectifierNet(cfg, store, rng)
    # move off the identity point: saturated x logits and boundary y values
    # would make finite differences disagree with the clamp subgradient
    g = cfg.grid
    raw = np.concatenate(
        [
            rng.uniform(-1.5, 1.5, g.m * g.n),
            rng.uniform(0.35, 0.65, g.m),
            rng.uniform(-0.04, 0.04, g.w),
        ]
    )
    net.fc2_b.data = raw
    net.fc2_w.data = rng.normal(0.0, 0.01, net.fc2_w.data.shape)
    return net, store


def suite_rect_net(seed: int = 0) -> float:
    net, store = _perturbed_rectifier(seed)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xEC)))
    img = Image(_smooth_image(rng, 36, 128))
    wsum = rng.uniform(-1, 1, (1, 32, 100))

    def loss():
        out, _ = net.rectify(img)
        return _weighted_sum(out, wsum)

    wrt = [store[n] for n in ("rect.conv1.weight", "rect.fc1.weight", "rect.fc2.weight", "rect.fc2.bias")]
    # h = 1e-6: the full warp samples 3200 points, so the chance that a probe
    # sweeps one across a bilinear-lattice kink must be kept small
    return finite_diff_check(loss, wrt, h=1e-6, max_entries=8, rng=rng)


def suite_encoder(seed: int = 0) -> float:
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xE0)))
    store = ParameterStore()
    cfg = EncoderConfig(
        in_hw=(4, 12),
        stem_channels=8,
        block_channels=(16, 32),
        block_strides=((2, 2), (2, 2)),
        units_per_block=(1, 1),
        lstm_hidden=16,
        lstm_layers=2,
        scale=2,
    )
    enc = RecognitionEncoder(cfg, store, rng)
    x = Tensor(rng.uniform(0, 1, (2, 1, 4, 12)), requires_grad=True)
    wsum = rng.uniform(-1, 1, (2, cfg.seq_len, cfg.feature_dim))

    def loss():
        return _weighted_sum(enc.encode(x), wsum)

    wrt = [x, store["encoder.stem.weight"], store["encoder.block1.unit1.conv3.weight"],
           store["encoder.lstm1.fwd.w_ih"], store["encoder.lstm2.bwd.w_hh"]]
    return finite_diff_check(loss, wrt, max_entries=10, rng=rng)


def suite_bidi_decoder(seed: int = 0) -> float:
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xDE)))
    store = ParameterStore()
    vocab = Vocabulary(("a", "b", "c", "d"))
    cfg = DecoderConfig(feature_dim=6, hidden=5, attn_units=4, embed_dim=3)
    dec = BidiDecoder(cfg, vocab, store, rng)
    h = Tensor(rng.uniform(-1, 1, (2, 7, 6)), requires_grad=True)
    targets = ["abc", "db"]

    def loss():
        return dec.teacher_forced_loss(h, targets, lam=0.6)

    wrt = [h] + [t for _, t in store.items()]
    return finite_diff_check(loss, wrt, max_entries=12, rng=rng)


SUITES: dict[str, tuple[Callable[[int], float], float]] = {
    "tensor_autodiff": (suite_tensor_autodiff, 1e-4),
    "poly_grid": (suite_poly_grid, 1e-4),
    "tps_warp": (suite_tps_warp, 1e-3),
    "rect_net": (suite_rect_net, 1e-3),
    "encoder": (suite_encoder, 1e-3),
    "bidi_decoder": (suite_bidi_decoder, 1e-3),
}
