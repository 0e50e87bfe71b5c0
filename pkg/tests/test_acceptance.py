"""Acceptance gate: one test per criterion, one printed line each.

Criteria 6 and 7 train real models and dominate the suite's runtime;
their step budgets and bars were established by pilot runs and frozen
here.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from curvetext.autodiff import ParameterStore, Tensor, backward, no_grad
from curvetext.checkpoint import load_checkpoint
from curvetext.cli import main
from curvetext.corpus import SplitConfig, generate_split
from curvetext.decoder import BidiDecoder, DecoderConfig, Direction, Vocabulary
from curvetext.gradcheck import SUITES
from curvetext.imaging import Image, resize_bilinear
from curvetext.poly_grid import GridConfig, build_grid, identity_raw, target_points
from curvetext.rectifier import RectifierNet, RectNetConfig, baseline_curvature
from curvetext.tps import TargetGrid, map_point, rectify_image, solve_tps, _system
from curvetext.training import (
    Model,
    TrainConfig,
    evaluate,
    load_manifest,
    normalize_text,
    train,
    _load_images,
)

# pilot-frozen training budgets (see tests for the bars they protect)
OVERFIT_STEP_BUDGET = 2000       # spec budget; pilot converged at 450
OVERFIT_TIME_BUDGET_S = 600.0
GENERALIZE_STEPS = 4000          # frozen by pilot run
GENERALIZE_ACCURACY_BAR = 0.60
CURVATURE_REDUCTION_BAR = 0.50


def report(num: int, text: str, ok: bool) -> None:
    print(f"\n[criterion {num:2d}] {'PASS' if ok else 'FAIL'}: {text}")
    assert ok, f"criterion {num} failed: {text}"


# ----------------------------------------------------------------------
def test_criterion_1_gradient_correctness():
    t0 = time.time()
    suite, thr = SUITES["tensor_autodiff"]
    err_ops = suite(0, rounds=20)
    suite_r, thr_r = SUITES["rect_net"]
    err_rect = max(suite_r(s) for s in (0, 1))
    elapsed = time.time() - t0
    ok = err_ops < thr and err_rect < thr_r and elapsed < 120.0
    report(1, f"op gradients {err_ops:.2e} < {thr}, composed rectifier "
              f"{err_rect:.2e} < {thr_r}, runtime {elapsed:.0f}s < 120s", ok)


def test_criterion_2_tps_exactness():
    cfg = GridConfig(3, 10, 4)
    tg = TargetGrid.from_config(cfg)
    rng = np.random.default_rng(2)

    img = Image(rng.uniform(0, 1, (36, 128)))
    grid = build_grid(cfg, Tensor(identity_raw(cfg)))
    out = rectify_image(Tensor(img.to_chw()), grid).data
    ref = resize_bilinear(img, 32, 100).to_chw()
    identity_err = np.abs(out - ref).max()

    values = rng.uniform(0, 1, (cfg.num_points, 2))
    mapping = solve_tps(tg, Tensor(values))
    interp_err = np.abs(map_point(mapping, tg.flat).data - values).max()

    affine = tg.flat @ np.array([[0.9, 0.1], [-0.05, 1.1]]).T + [0.02, -0.03]
    nonlin = np.abs(solve_tps(tg, Tensor(affine)).T.data[: cfg.num_points]).max()

    rhs = np.zeros((cfg.num_points + 3, 2))
    rhs[: cfg.num_points] = values
    residual = np.abs(_system(cfg).a0 @ mapping.T.data - rhs).max()

    ok = identity_err < 1e-6 and interp_err < 1e-8 and nonlin < 1e-8 and residual < 1e-8
    report(2, f"identity {identity_err:.2e} < 1e-6, interpolation {interp_err:.2e} < 1e-8, "
              f"affine nonlinear weights {nonlin:.2e} < 1e-8, residual {residual:.2e} < 1e-8", ok)


def test_criterion_3_grid_algebra():
    dims = {(3, 10, 4): 37, (2, 18, 2): 40, (3, 12, 3): 42, (4, 9, 4): 44}
    head_ok = all(GridConfig(*k).head_dim == v for k, v in dims.items())

    rng = np.random.default_rng(3)
    cfg = GridConfig(3, 10, 4)
    xs_row = rng.uniform(-2, 2, cfg.n)
    raw = np.concatenate([np.tile(xs_row, cfg.m), [0.3, 0.5, 0.62], rng.uniform(-0.05, 0.05, cfg.w)])
    grid = build_grid(cfg, Tensor(raw))
    ys, b = grid.points.data[:, :, 1], grid.biases.data
    trans_err = max(
        np.abs((ys[i] - ys[j]) - (b[i] - b[j])).max()
        for i in range(cfg.m) for j in range(cfg.m)
    )
    ok = head_ok and trans_err < 1e-12
    report(3, f"head dims {dims} correct, row-translation error {trans_err:.2e} < 1e-12", ok)


def test_criterion_4_decoder_sharing():
    rng = np.random.default_rng(4)
    store = ParameterStore()
    vocab = Vocabulary.toy()
    dec = BidiDecoder(DecoderConfig(feature_dim=8, hidden=6, attn_units=5, embed_dim=4),
                      vocab, store, rng)
    census = dec.census()
    census_ok = census["direction"] == 2

    dec.dir_bwd.data[:] = dec.dir_fwd.data
    h = Tensor(rng.uniform(-1, 1, (1, 7, 8)))
    tokens = vocab.encode("3a1f")
    fwd = dec.directional_logits(h, tokens, Direction.FORWARD)
    bwd = dec.directional_logits(h, list(reversed(tokens)), Direction.BACKWARD)
    bitexact = all(np.array_equal(a, b) for a, b in zip(fwd, bwd))

    dec.dir_bwd.data[:] = -1.0
    loss = dec.teacher_forced_loss(h, "3a1f", lam=1.0)
    store.zero_grad()
    backward(loss)
    lam_ok = np.array_equal(store["decoder.direction.backward"].grad, [0.0])

    ok = census_ok and bitexact and lam_ok
    report(4, f"census direction scalars = {census['direction']}, degenerate directions "
              f"bit-exact = {bitexact}, lambda=1 backward-scalar grad zero = {lam_ok}", ok)


def test_criterion_5_beam_search_oracle():
    from tests.test_decoder import exhaustive_best  # same scoring, enumerated

    mismatches = 0
    greedy_mismatches = 0
    for seed in range(50):
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0xAC)))
        store = ParameterStore()
        vocab = Vocabulary(("a", "b"))  # size 4 with EOS/START
        dec = BidiDecoder(DecoderConfig(feature_dim=5, hidden=4, attn_units=3, embed_dim=3),
                          vocab, store, np.random.default_rng(seed + 1000))
        h = Tensor(rng.uniform(-1, 1, (1, 4, 5)))
        top = dec.beam_search(h, Direction.FORWARD, k=64, max_len=3)[0]
        if top.tokens != exhaustive_best(dec, h, Direction.FORWARD, 3):
            mismatches += 1

        top1 = dec.beam_search(h, Direction.FORWARD, k=1, max_len=4)[0]
        with no_grad():
            s = Tensor(np.zeros((1, 4)))
            y_prev = vocab.start
            greedy = []
            for _ in range(4):
                logits, s = dec.decode_step(s, np.array([y_prev]), Direction.FORWARD, h)
                nxt = int(np.argmax(logits.data[0]))
                if nxt == vocab.eos:
                    break
                greedy.append(nxt)
                y_prev = nxt
        if list(top1.tokens) != greedy:
            greedy_mismatches += 1

    ok = mismatches == 0 and greedy_mismatches == 0
    report(5, f"beam==exhaustive on 50/50 models, beam(k=1)==greedy on 50/50 models", ok)


# ----------------------------------------------------------------------
@pytest.fixture(scope="module")
def overfit_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("accept_overfit")
    mix = {"curve": 0.6, "none": 0.2, "perspective": 0.1, "rotation": 0.1}
    return generate_split(root, 8, seed=7, cfg=SplitConfig(mix=mix))


def test_criterion_6_overfit_training(overfit_corpus):
    samples = _load_images(load_manifest(overfit_corpus))
    model = Model(Vocabulary.toy(), scale=4, grid=(3, 10, 4), init_seed=0)
    cfg = TrainConfig(steps=OVERFIT_STEP_BUDGET, seed=0, lam=0.7, scale=4)
    t0 = time.time()
    state = {"step": None}

    def probe(step, loss):
        if (step + 1) % 50 != 0:
            return False
        correct = sum(
            int(normalize_text(model.recognize_image(img, k=1)) == normalize_text(label))
            for img, label in samples
        )
        if correct == len(samples):
            state["step"] = step + 1
            return True
        return False

    train(model, overfit_corpus, cfg, on_step=probe)
    elapsed = time.time() - t0
    ok = state["step"] is not None and state["step"] <= OVERFIT_STEP_BUDGET and elapsed < OVERFIT_TIME_BUDGET_S
    report(6, f"100% train word accuracy at step {state['step']} "
              f"(budget {OVERFIT_STEP_BUDGET}), {elapsed:.0f}s < {OVERFIT_TIME_BUDGET_S:.0f}s", ok)


def test_criterion_7_toy_generalization(tmp_path):
    train_man = generate_split(tmp_path / "train", 2000, seed=101)
    eval_man = generate_split(tmp_path / "eval", 200, seed=202, cfg=SplitConfig(mix={"curve": 1.0}))

    model = Model(Vocabulary.toy(), scale=4, grid=(3, 10, 4), init_seed=0)
    cfg = TrainConfig(steps=GENERALIZE_STEPS, seed=0)
    train(model, train_man, cfg)

    result = evaluate(model, eval_man, k=5)

    eval_samples = _load_images(load_manifest(eval_man))
    ratios_in, ratios_out = [], []
    for img, _ in eval_samples[:50]:
        with no_grad():
            rect, _ = model.rectifier.rectify(img)
        ratios_in.append(baseline_curvature(resize_bilinear(img, 32, 100)))
        ratios_out.append(baseline_curvature(Image.from_chw(rect.data)))
    reduction = 1.0 - float(np.mean(ratios_out) / np.mean(ratios_in))

    ok = result.accuracy >= GENERALIZE_ACCURACY_BAR and reduction >= CURVATURE_REDUCTION_BAR
    report(7, f"held-out word accuracy {result.accuracy:.3f} >= {GENERALIZE_ACCURACY_BAR}, "
              f"curvature reduction {reduction:.2%} >= {CURVATURE_REDUCTION_BAR:.0%}", ok)


def test_criterion_8_determinism(tmp_path):
    data = tmp_path / "data"
    rc = main(["gen-data", "--out", str(data), "--count", "4", "--seed", "5",
               "--mix", "none=1.0", "--max-len", "2"])
    assert rc == 0
    blobs = []
    for run in ("a", "b"):
        ckpt = tmp_path / f"{run}.ckpt"
        rc = main(["train", "--data", str(data / "manifest.tsv"), "--out", str(ckpt),
                   "--steps", "5", "--scale", "8", "--grid", "2x5", "--order", "2",
                   "--batch", "2", "--seed", "11"])
        assert rc == 0
        blobs.append((ckpt.read_bytes(), (tmp_path / f"{run}.ckpt.loss.tsv").read_bytes()))
    # the two checkpoints differ only in their serialized order of creation;
    # compare payload bytes exactly
    same_ckpt = blobs[0][0] == blobs[1][0]
    same_log = blobs[0][1] == blobs[1][1]
    ok = same_ckpt and same_log
    report(8, f"byte-identical checkpoints = {same_ckpt}, byte-identical loss logs = {same_log}", ok)


def test_criterion_9_explicit_non_reproducibility():
    # published benchmark numbers need the 16M-image training regime and are
    # out of desk-scale reach; the artifact reproduces only the ablation AXES
    order_values = [2, 3, 4, 5]
    grid_values = [(2, 18), (3, 12), (4, 9)]
    axes_ok = all(GridConfig(3, 10, w).head_dim == 30 + 3 + w for w in order_values)
    axes_ok &= all(GridConfig(m, n, 4).head_dim == m * n + m + 4 for m, n in grid_values)

    import argparse
    from curvetext.cli import build_parser

    parser = build_parser()
    ns = parser.parse_args(["sweep", "--axis", "order", "--values", "2,3,4,5", "--workdir", "x"])
    axes_ok &= ns.axis == "order"
    ns = parser.parse_args(["sweep", "--axis", "grid", "--values", "2x18,3x12,4x9", "--workdir", "x"])
    axes_ok &= ns.axis == "grid"
    with pytest.raises(SystemExit):
        parser.parse_args(["sweep", "--axis", "benchmark", "--values", "IIIT5K", "--workdir", "x"])

    report(9, "benchmark accuracies (IIIT5K 93.4, CUTE 86.1, ...) are NOT reproduced at "
              "desk scale; sweep exposes exactly the order/grid ablation axes", axes_ok)


def test_criterion_10_metric_contract():
    cases = [("Hello!", "hello", True), ("ab-c", "abc", True), ("", "a", False)]
    rng = np.random.default_rng(10)
    words = ["hello", "abc123", "f00d", "x", "91b2c"]
    punct = list("!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~ \t")
    while len(cases) < 53:
        w = words[rng.integers(len(words))]
        noisy = "".join(ch.upper() if rng.random() < 0.5 else ch for ch in w)
        pos = int(rng.integers(0, len(noisy) + 1))
        noisy = noisy[:pos] + punct[rng.integers(len(punct))] + noisy[pos:]
        cases.append((noisy, w, True))
    ok = all((normalize_text(p) == normalize_text(g)) is m for p, g, m in cases)
    report(10, f"case/punctuation invariance holds on {len(cases)}-case table "
               f"including 'Hello!'=='hello' and 'ab-c'=='abc'", ok)
