"""Command-line entry point: data generation, training, evaluation, inference, ablations, oracle."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .config import TrainConfig, dump_config, load_config

log = logging.getLogger("jnmr")


def _config(args) -> TrainConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else TrainConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
        cfg.model.seed = args.seed
    if getattr(args, "data", None):
        cfg.data_root = str(args.data)
    if getattr(args, "epochs", None) is not None:
        cfg.max_epochs = args.epochs
    return cfg


def _out(args, default: str) -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def plot_losses(record, path) -> Optional[Path]:
    """Per-epoch loss curves as PNG (skipped when there is nothing to plot)."""
    if not record.epochs:
        return None
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    epochs = [row["epoch"] for row in record.epochs]
    for key in ("total", "charbonnier", "perceptual", "deformation"):
        if key in record.epochs[0]:
            ax.plot(epochs, [row[key] for row in record.epochs], marker="o", label=key)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)


def plot_profile(profile, path) -> Path:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    img = profile.clamp(0, 1).permute(1, 2, 0).numpy()
    fig, ax = plt.subplots(figsize=(5, 2))
    ax.imshow(img, aspect="auto", interpolation="nearest")
    ax.set_xlabel("x")
    ax.set_ylabel("t")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)


def cmd_generate_data(args) -> int:
    from .data import write_dataset

    cfg = _config(args)
    data_seed = args.seed if args.seed is not None else cfg.data_seed
    root = write_dataset(_out(args, "data"), {"train": args.train or cfg.train_scenes,
                                              "test": args.test or cfg.test_scenes},
                         data_seed=data_seed, size=cfg.image_size)
    print(f"wrote synthetic septuplets to {root}")
    return 0


def cmd_train(args) -> int:
    from .training import train

    cfg = _config(args)
    out = _out(args, "runs/train")
    dump_config(cfg, out / "config.yaml")
    _, record = train(cfg, out_dir=out, max_steps=args.max_steps, resume=args.checkpoint)
    if args.plot:
        plot_losses(record, out / "loss_curves.png")
    print(f"steps {record.steps}  parameters {record.parameters}  test PSNR {record.final_psnr:.4f} dB  "
          f"({record.wall_clock:.1f} s)  record {out / 'run.json'}")
    return 0


def cmd_eval(args) -> int:
    from .metrics import temporal_profile
    from .model import load_checkpoint
    from .training import evaluate, load_datasets

    if not args.checkpoint:
        raise ValueError("eval needs --checkpoint")
    cfg = _config(args)
    model, _ = load_checkpoint(args.checkpoint)
    _, test_set = load_datasets(cfg)
    report = evaluate(model, test_set, stratify=args.stratify)
    out = _out(args, "runs/eval")
    report.write_records(out / "per_sequence.jsonl")
    summary = dict(report.summary(), checkpoint=str(args.checkpoint), split="test")
    (out / "report.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"PSNR {report.mean_psnr:.4f} dB  SSIM {report.mean_ssim:.5f}  n={len(report.rows)}")
    for name, row in report.strata.items():
        print(f"  {name:<7} PSNR {row['psnr']:.4f}  SSIM {row['ssim']:.5f}  n={row['n']}")
    if args.plot and len(test_set):
        inputs, target = test_set.sample(0)
        pred = model.interpolate(inputs[None])[0]
        seq = [inputs[0], inputs[1], pred, inputs[2], inputs[3]]
        plot_profile(temporal_profile(seq, target.shape[-2] // 2), out / "temporal_profile.png")
    return 0


def cmd_interpolate(args) -> int:
    from .training import interpolate

    if not args.checkpoint:
        raise ValueError("interpolate needs --checkpoint")
    if not args.out:
        raise ValueError("interpolate needs --out (output PNG path)")
    path = interpolate(args.checkpoint, args.inputs, args.out)
    print(f"wrote {path}")
    return 0


def cmd_ablate(args) -> int:
    from .ablation import run_ablation
    from .training import load_datasets

    cfg = _config(args)
    out = _out(args, f"runs/ablate_{args.suite}")
    train_set, test_set = load_datasets(cfg)
    table = run_ablation(args.suite, cfg, train_set, test_set, out_dir=out)
    print(table.to_text(), end="")
    return 0


def cmd_oracle_check(args) -> int:
    from .oracle import oracle_check

    results = oracle_check(args.mutation)
    lines = [r.line() for r in results]
    print("\n".join(lines))
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} properties pass")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text("\n".join(lines) + "\n")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jnmr", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--config", type=Path, help="YAML config tree")
        p.add_argument("--seed", type=int, help="overrides train and model seeds")
        p.add_argument("--out", help="output directory or file")
        if data:
            p.add_argument("--data", type=Path, help="dataset root written by generate-data")

    p = sub.add_parser("generate-data", help="write a synthetic septuplet dataset")
    common(p, data=False)
    p.add_argument("--train", type=int, help="number of training sequences")
    p.add_argument("--test", type=int, help="number of test sequences")
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("train", help="train a model and evaluate it on the test split")
    common(p)
    p.add_argument("--checkpoint", help="resume from this checkpoint")
    p.add_argument("--epochs", type=int)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--plot", action="store_true", help="write loss_curves.png")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--stratify", action="store_true", help="slow / medium / fast terciles")
    p.add_argument("--plot", action="store_true", help="write temporal_profile.png")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("interpolate", help="predict the middle frame of four images")
    common(p, data=False)
    p.add_argument("--checkpoint")
    p.add_argument("inputs", nargs=4, help="frames at times -2, -1, 1, 2")
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("ablate", help="train and compare the variants of one suite")
    common(p)
    p.add_argument("--suite", required=True,
                   choices=["regression_modes", "components", "cfse_sources", "hierarchy"])
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("oracle-check", help="analytic self check; exit 1 if any property fails")
    p.add_argument("--mutation", help="inject a known defect, e.g. forward_sign")
    p.add_argument("--out", help="also write the report here")
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        print(f"jnmr {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
