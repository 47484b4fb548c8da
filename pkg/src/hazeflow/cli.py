"""Command-line interface: train, dehaze, eval, bench, ablate.

Options can come from a plain key=value config file (--config, or the
HAZEFLOW_CONFIG environment variable); explicit flags win. Exit codes:
0 success, 1 usage error, 2 data error, 3 numerical divergence.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .ablation import SUITES, AblationConfig, format_report, run_all, run_suite, write_reports
from .bench import run_bench
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import DataError, DivergenceError, HazeflowError
from .flow import FlowConfig, integrate
from .imgio import load_image, save_image
from .lut import identity_lut
from .metrics import MetricReport, evaluate_pairs, psnr, ssim
from .purifier import PurifierNet
from .tensor import Tensor, no_grad
from .tiling import TilePlan, dehaze_tiled
from .training import TrainConfig, history_table, make_toy_dataset, train_loop

CONFIG_ENV_VAR = "HAZEFLOW_CONFIG"


# ---------------------------------------------------------------------------
# command implementations
# ---------------------------------------------------------------------------


def _load_pair_dirs(hazy_dir: str, clean_dir: str):
    if not os.path.isdir(hazy_dir):
        raise DataError(f"not a directory: {hazy_dir}")
    if not os.path.isdir(clean_dir):
        raise DataError(f"not a directory: {clean_dir}")
    names = sorted(set(os.listdir(hazy_dir)) & set(os.listdir(clean_dir)))
    names = [n for n in names
             if os.path.splitext(n)[1].lower() in (".ppm", ".pnm", ".png",
                                                   ".jpg", ".jpeg", ".bmp")]
    if not names:
        raise DataError(
            f"no matching image pairs between {hazy_dir} and {clean_dir}")
    hazy = [load_image(os.path.join(hazy_dir, n)) for n in names]
    clean = [load_image(os.path.join(clean_dir, n)) for n in names]
    return names, hazy, clean


def _flow_from_args(args, base: FlowConfig | None = None) -> FlowConfig:
    base = base or FlowConfig()
    return FlowConfig(
        solver=args.solver if args.solver is not None else base.solver,
        steps=args.steps if args.steps is not None else base.steps,
        t0=base.t0, t1=base.t1,
        lam=args.lam if args.lam is not None else base.lam)


def cmd_train(args) -> int:
    cfg = TrainConfig(lr=args.lr, weight_decay=args.weight_decay,
                      batch_size=args.batch_size, epochs=args.epochs,
                      patience=args.patience, factor=args.factor,
                      seed=args.seed)
    flow_cfg = _flow_from_args(args)

    if args.hazy_dir and args.clean_dir:
        names, hazy_list, clean_list = _load_pair_dirs(args.hazy_dir, args.clean_dir)
        shapes = {im.shape for im in hazy_list + clean_list}
        if len(shapes) != 1:
            raise DataError(f"training images disagree in shape: {shapes}")
        hazy = np.concatenate(hazy_list, axis=0)
        clean = np.concatenate(clean_list, axis=0)
        print(f"loaded {len(names)} pairs from {args.hazy_dir}")
    else:
        hazy, clean = make_toy_dataset(args.synth_pairs, args.synth_size,
                                       args.seed)
        print(f"generated {args.synth_pairs} synthetic pairs "
              f"({args.synth_size}x{args.synth_size})")

    result = train_loop((hazy, clean), cfg, flow_cfg, width=args.width,
                        lut_size=args.lut_size)
    result.restore_best()
    table = history_table(result.history)
    if args.loss_log:
        with open(args.loss_log, "w", encoding="ascii") as fh:
            fh.write(table + "\n")
    else:
        print(table)
    print(f"best val L1 {result.best_val:.6f} at epoch {result.best_epoch}")

    save_checkpoint(args.out, result.net, result.lut, flow_cfg,
                    optimizer=result.optimizer,
                    metadata={"seed": cfg.seed, "epoch": len(result.history),
                              "best_val_loss": result.best_val,
                              "best_epoch": result.best_epoch})
    print(f"checkpoint written to {args.out}")
    return 0


def _load_model(args):
    if args.checkpoint:
        ckpt = load_checkpoint(args.checkpoint)
        return ckpt.net, ckpt.lut, _flow_from_args(args, ckpt.flow)
    net = PurifierNet(width=args.width, seed=args.seed)
    lut = identity_lut(args.lut_size)
    return net, lut, _flow_from_args(args)


def cmd_dehaze(args) -> int:
    net, lut, flow_cfg = _load_model(args)
    image = load_image(args.input)

    if args.record_trajectory:
        os.makedirs(args.record_trajectory, exist_ok=True)
        with no_grad():
            result = integrate(Tensor(image), net, lut, flow_cfg,
                               record_trajectory=True)
        save_image(image, os.path.join(args.record_trajectory, "step_000.png"))
        for i, state in enumerate(result.trajectory, start=1):
            save_image(state.clamp(0.0, 1.0),
                       os.path.join(args.record_trajectory, f"step_{i:03d}.png"))
        output = result.output.data
    elif args.tile and (image.shape[2] > args.tile or image.shape[3] > args.tile):
        plan = TilePlan(tile=args.tile, overlap=args.overlap)
        output = dehaze_tiled(image, net, lut, flow_cfg, plan)
    else:
        with no_grad():
            output = integrate(Tensor(image), net, lut, flow_cfg).output.data

    save_image(output, args.output)
    print(f"dehazed {args.input} -> {args.output} "
          f"({flow_cfg.solver}, {flow_cfg.steps} steps, lambda {flow_cfg.lam})")
    return 0


def cmd_eval(args) -> int:
    if args.pred_dir:
        names, preds, refs = _load_pair_dirs(args.pred_dir, args.clean_dir)
        report = evaluate_pairs([p[0] for p in preds], [r[0] for r in refs],
                                names)
    else:
        if not args.hazy_dir:
            raise DataError("eval needs either --pred-dir or --hazy-dir")
        net, lut, flow_cfg = _load_model(args)
        names, hazy, clean = _load_pair_dirs(args.hazy_dir, args.clean_dir)
        report = MetricReport()
        baseline = MetricReport()
        with no_grad():
            for name, hz, cl in zip(names, hazy, clean):
                out = integrate(Tensor(hz), net, lut, flow_cfg).output.data
                report.add(name, psnr(out, cl), ssim(out[0], cl[0]))
                baseline.add(name, psnr(hz, cl), ssim(hz[0], cl[0]))
        print("input baseline:")
        print(baseline.key_value_lines(prefix="input_"))

    text = report.format_table() + "\n" + report.key_value_lines()
    print(text)
    if args.out:
        with open(args.out, "w", encoding="ascii") as fh:
            fh.write(text + "\n")
    return 0


def cmd_bench(args) -> int:
    flow_cfg = _flow_from_args(args)
    plan = None
    if args.tile and (args.height > args.tile or args.width_px > args.tile):
        plan = TilePlan(tile=args.tile, overlap=args.overlap)
    report = run_bench(args.height, args.width_px, flow_cfg,
                       net_width=args.net_width, lut_size=args.lut_size,
                       plan=plan, seed=args.seed)
    print(report.format())
    print(report.key_value_lines())
    return 0


def cmd_ablate(args) -> int:
    acfg = AblationConfig(seed=args.seed, n_pairs=args.pairs, size=args.size,
                          epochs=args.epochs, width=args.width,
                          lut_size=args.lut_size, steps=args.steps)
    if args.suite == "all":
        results = run_all(acfg)
    else:
        results = {args.suite: run_suite(args.suite, acfg)}
    print(format_report(results))
    if args.out_dir:
        paths = write_reports(results, args.out_dir)
        print("reports written: " + ", ".join(paths))
    return 0


# ---------------------------------------------------------------------------
# parser and config-file plumbing
# ---------------------------------------------------------------------------


def _add_flow_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--steps", type=int, default=None, help="solver steps")
    p.add_argument("--solver", choices=("euler", "midpoint", "rk4"),
                   default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="LUT weight in the vector field")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--width", type=int, default=16, help="purifier width")
    p.add_argument("--lut-size", type=int, default=33, help="LUT bins per channel")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hazeflow",
        description="Image dehazing via ODE integration of a haze-aware "
                    "vector field (CNN purifier + learnable 3D LUT).")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train purifier + LUT")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--out", default="checkpoint.hzf")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--patience", type=int, default=100)
    p.add_argument("--factor", type=float, default=0.5)
    p.add_argument("--hazy-dir", default=None)
    p.add_argument("--clean-dir", default=None)
    p.add_argument("--synth-pairs", type=int, default=16)
    p.add_argument("--synth-size", type=int, default=32)
    p.add_argument("--loss-log", default=None)
    _add_model_flags(p)
    _add_flow_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("dehaze", help="dehaze one image")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--config", default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--tile", type=int, default=512,
                   help="tile size for large images; 0 disables tiling")
    p.add_argument("--overlap", type=int, default=32)
    p.add_argument("--record-trajectory", default=None, metavar="DIR",
                   help="write step_000.png .. step_NNN.png (forces untiled)")
    _add_model_flags(p)
    _add_flow_flags(p)
    p.set_defaults(func=cmd_dehaze)

    p = sub.add_parser("eval", help="metric table over paired directories")
    p.add_argument("--config", default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--hazy-dir", default=None)
    p.add_argument("--pred-dir", default=None,
                   help="already-dehazed images; skips the model")
    p.add_argument("--clean-dir", required=True)
    p.add_argument("--out", default=None)
    _add_model_flags(p)
    _add_flow_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="timing / memory / MAC report")
    p.add_argument("--config", default=None)
    p.add_argument("--height", type=int, default=2160)
    p.add_argument("--width", dest="width_px", type=int, default=3840)
    p.add_argument("--net-width", type=int, default=16)
    p.add_argument("--lut-size", type=int, default=33)
    p.add_argument("--tile", type=int, default=512)
    p.add_argument("--overlap", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    _add_flow_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("ablate", help="run ablation suites")
    p.add_argument("suite", choices=SUITES + ("all",))
    p.add_argument("--config", default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--pairs", type=int, default=8)
    p.add_argument("--size", type=int, default=16)
    p.add_argument("--epochs", type=int, default=25)
    p.add_argument("--width", type=int, default=4)
    p.add_argument("--lut-size", type=int, default=9)
    p.add_argument("--steps", type=int, default=2)
    p.set_defaults(func=cmd_ablate)

    return parser


def _read_config_flags(path: str) -> list[str]:
    if not os.path.exists(path):
        raise DataError(f"config file not found: {path}")
    flags = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise DataError(f"{path}:{lineno}: expected key=value")
            key, value = key.strip(), value.strip()
            flags.extend(["--" + key.replace("_", "-"), value])
    return flags


def _merge_config(argv: list[str]) -> list[str]:
    """Insert config-file options after the subcommand; explicit flags win."""
    if not argv or argv[0].startswith("-"):
        return argv
    config_path = None
    if "--config" in argv:
        idx = argv.index("--config")
        if idx + 1 < len(argv):
            config_path = argv[idx + 1]
    elif os.environ.get(CONFIG_ENV_VAR):
        config_path = os.environ[CONFIG_ENV_VAR]
    if not config_path:
        return argv
    flags = _read_config_flags(config_path)
    # later occurrences win in argparse, so config flags go first
    return [argv[0]] + flags + argv[1:]


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _merge_config(argv)
        args = parser.parse_args(argv)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1

    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"divergence: {exc} (step {exc.step})", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except HazeflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
