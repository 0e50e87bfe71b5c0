"""Command-line surface: data generation, training, evaluation, warping.

Exit codes: 0 success, 1 runtime failure, 2 usage error.  Every command
is deterministic given its flags and seed.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import SplitConfig, generate_split
from .decoder import Vocabulary
from .gradcheck import SUITES
from .imaging import Image
from .pnm import read_pnm, write_pnm
from .poly_grid import ControlGrid, eval_poly
from .training import Model, TrainConfig, evaluate, train

POINT_COLOR = (1.0, 0.0, 0.0)
CURVE_COLOR = (0.0, 0.0, 1.0)


class UsageError(ValueError):
    """Bad flag values discovered after argparse (exit code 2)."""


def _parse_mix(spec: str) -> dict[str, float]:
    mix = {}
    try:
        for part in spec.split(","):
            kind, frac = part.split("=")
            mix[kind.strip()] = float(frac)
    except ValueError:
        raise UsageError(f"bad --mix {spec!r}; expected 'kind=frac,kind=frac'") from None
    if not mix or any(v < 0 for v in mix.values()) or sum(mix.values()) <= 0:
        raise UsageError(f"bad --mix {spec!r}; fractions must be nonnegative and sum > 0")
    known = {"none", "curve", "perspective", "rotation"}
    unknown = set(mix) - known
    if unknown:
        raise UsageError(f"unknown distortion kinds in --mix: {sorted(unknown)}")
    return mix


def _parse_grid(spec: str) -> tuple[int, int]:
    try:
        m, n = spec.lower().split("x")
        return int(m), int(n)
    except ValueError:
        raise UsageError(f"bad grid {spec!r}; expected MxN like 3x10") from None


def _loss_log_path(ckpt: Path) -> Path:
    return ckpt.with_name(ckpt.name + ".loss.tsv")


def _write_loss_log(path: Path, losses: list[float]) -> None:
    path.write_text("".join(f"{i}\t{v:.17g}\n" for i, v in enumerate(losses)), encoding="utf-8")


def _load_model(ckpt_path: str) -> Model:
    entries, step = load_checkpoint(ckpt_path)
    model = Model.from_entries(entries)
    return model


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    cfg = SplitConfig(mix=_parse_mix(args.mix), min_len=args.min_len, max_len=args.max_len)
    manifest = generate_split(args.out, args.count, args.seed, cfg)
    print(manifest)
    return 0


def _train_config(args, steps: int | None = None) -> TrainConfig:
    m, n = _parse_grid(args.grid)
    return TrainConfig(
        lam=getattr(args, "lam", 0.7),
        batch_size=args.batch,
        lr=args.lr,
        steps=args.steps if steps is None else steps,
        seed=args.seed,
        scale=args.scale,
        grid=(m, n, args.order),
    )


def cmd_train(args) -> int:
    cfg = _train_config(args)
    model = Model(Vocabulary.toy(), scale=cfg.scale, grid=cfg.grid, init_seed=cfg.seed)
    result = train(model, args.data, cfg)
    out = Path(args.out)
    save_checkpoint(out, result.entries, result.steps)
    _write_loss_log(_loss_log_path(out), result.losses)
    print(f"saved {out} after {result.steps} steps")
    return 0


def cmd_eval(args) -> int:
    model = _load_model(args.ckpt)
    result = evaluate(model, args.data, k=args.beam)
    report = Path(args.report) if args.report else Path(args.ckpt + ".report.tsv")
    report.write_text(
        "".join(f"{i}\t{gt}\t{pred}\t{str(ok).lower()}\n" for i, gt, pred, ok in result.rows),
        encoding="utf-8",
    )
    print(f"accuracy {result.accuracy:.4f}")
    return 0


def _draw_overlay(img: Image, grid: ControlGrid) -> Image:
    rgb = img.to_rgb().data.copy()
    h, w = rgb.shape[:2]

    def put(xn: float, yn: float, color) -> None:
        col = min(max(int(round(xn * w - 0.5)), 0), w - 1)
        row = min(max(int(round(yn * h - 0.5)), 0), h - 1)
        rgb[row, col] = color

    if grid.coeffs is not None and grid.biases is not None:
        coeffs = grid.coeffs.data.tolist()
        for bias in grid.biases.data.tolist():
            for c in range(w):
                x = (c + 0.5) / w
                y = bias + eval_poly(coeffs, x)
                if 0.0 <= y <= 1.0:
                    put(x, y, CURVE_COLOR)
    for (x, y) in grid.points.data.reshape(-1, 2):
        put(x, y, POINT_COLOR)
    return Image(rgb)


def cmd_rectify(args) -> int:
    model = _load_model(args.ckpt)
    img = read_pnm(args.img)
    out, grid = model.rectifier.rectify(img)
    write_pnm(args.out, Image.from_chw(out.data))
    if args.overlay:
        prepared = model.rectifier.prepare(img)
        write_pnm(args.overlay, _draw_overlay(prepared, grid))
    print(args.out)
    return 0


def cmd_sweep(args) -> int:
    if args.axis == "order":
        gm, gn = _parse_grid(args.grid)
        configs = []
        for v in args.values.split(","):
            try:
                configs.append(((gm, gn, int(v)), v.strip()))
            except ValueError:
                raise UsageError(f"bad order value {v!r}") from None
    else:
        configs = []
        for v in args.values.split(","):
            m, n = _parse_grid(v)
            configs.append(((m, n, args.order), f"{m}x{n}"))

    work = Path(args.workdir)
    work.mkdir(parents=True, exist_ok=True)
    train_manifest = args.data or generate_split(work / "train", args.train_count, args.seed)
    eval_manifest = args.eval_data or generate_split(
        work / "eval", args.eval_count, args.seed + 1, SplitConfig(mix={"curve": 1.0})
    )
    for grid, label in configs:
        cfg = TrainConfig(steps=args.steps, seed=args.seed, scale=args.scale, grid=grid,
                          batch_size=args.batch, lr=args.lr)
        model = Model(Vocabulary.toy(), scale=cfg.scale, grid=grid, init_seed=cfg.seed)
        train(model, train_manifest, cfg)
        result = evaluate(model, eval_manifest, k=args.beam)
        print(f"{label}\t{result.accuracy:.4f}")
    return 0


def cmd_gradcheck(args) -> int:
    suite, threshold = SUITES[args.module]
    err = suite(args.seed)
    print(f"{args.module}: max relative error {err:.3e} (threshold {threshold:.0e})")
    return 0 if err < threshold else 1


# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="curvetext",
        description="Curved scene-text rectification and recognition at desk scale.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic split")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mix", default="curve=0.5,none=0.5")
    p.add_argument("--min-len", type=int, default=1)
    p.add_argument("--max-len", type=int, default=5)
    p.set_defaults(func=cmd_gen_data)

    def add_train_flags(p, steps_default):
        p.add_argument("--steps", type=int, default=steps_default)
        p.add_argument("--grid", default="3x10")
        p.add_argument("--order", type=int, default=4)
        p.add_argument("--scale", type=int, default=4)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--batch", type=int, default=8)
        p.add_argument("--lr", type=float, default=1e-3)

    p = sub.add_parser("train", help="train on a manifest")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=0.7)
    add_train_flags(p, steps_default=2000)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rectify", help="rectify one image")
    p.add_argument("--img", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--overlay", default=None)
    p.set_defaults(func=cmd_rectify)

    p = sub.add_parser("sweep", help="train/eval across an ablation axis")
    p.add_argument("--axis", choices=("order", "grid"), required=True)
    p.add_argument("--values", required=True)
    p.add_argument("--workdir", required=True)
    p.add_argument("--data", default=None)
    p.add_argument("--eval-data", default=None)
    p.add_argument("--train-count", type=int, default=200)
    p.add_argument("--eval-count", type=int, default=50)
    p.add_argument("--beam", type=int, default=5)
    add_train_flags(p, steps_default=300)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    p.add_argument("--module", choices=sorted(SUITES), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
