"""Command-line harness: gen, train, eval, ablate, gradcheck.

Exit codes: 0 success, 1 usage or config error, 2 dataset error,
3 numerical failure. Output files default into the directory named by
the MMSENT_OUT_DIR environment variable (cwd otherwise); reports are
written once, after a run completes, so failures never leave partial
files behind.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from mmsent.config import ConfigError, ExperimentConfig
from mmsent.data import (
    DatasetError,
    generate_synthetic,
    load_dataset,
    nearest_centroid_accuracy,
    report_json_bytes,
    save_report,
)
from mmsent.metrics import accuracy, macro_f1
from mmsent.model import ModelParams
from mmsent.tensor import DomainError
from mmsent.train import NumericalError, derive_rng, evaluate, split_dataset, SplitSpec, STREAM_MODEL_INIT
from mmsent.experiment import run, run_ablation_grid

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATASET = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; usage errors are 1 here
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _out_path(default_name: str, override: str | None) -> Path:
    """Explicit --out wins; otherwise relative defaults land in MMSENT_OUT_DIR."""
    if override:
        return Path(override)
    candidate = Path(default_name)
    if candidate.is_absolute():
        return candidate
    return Path(os.environ.get("MMSENT_OUT_DIR", ".")) / candidate


def _load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "data", None) is not None:
        overrides["dataset_dir"] = args.data
    if getattr(args, "epochs", None) is not None:
        overrides["epochs"] = args.epochs
    for flag in ("use_bilstm", "use_cnn", "use_cbam", "use_supcon"):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[flag] = value
    return config.replace(**overrides) if overrides else config.validate()


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file overriding config defaults")
    parser.add_argument("--seed", type=int, help="override the run seed")
    parser.add_argument("--data", help="dataset directory")
    parser.add_argument("--out", help="output file path")
    for flag in ("use_bilstm", "use_cnn", "use_cbam", "use_supcon"):
        dash = flag.replace("_", "-")
        parser.add_argument(f"--{dash}", dest=flag, action=argparse.BooleanOptionalAction,
                            default=None, help=f"override the {flag} ablation switch")


def build_parser() -> _Parser:
    parser = _Parser(prog="mmsent", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="write a class-conditioned synthetic dataset")
    gen.add_argument("--out", help="dataset directory (default: <MMSENT_OUT_DIR>/data)")
    gen.add_argument("--classes", type=int, default=3)
    gen.add_argument("--per-class", type=int, default=30)
    gen.add_argument("--seed", type=int, default=42)
    gen.add_argument("--noise", type=float, default=0.3, help="image feature noise around class centroids")
    gen.add_argument("--seq-len", type=int, default=12)
    gen.add_argument("--channels", type=int, default=8)
    gen.add_argument("--height", type=int, default=4)
    gen.add_argument("--width", type=int, default=4)
    gen.add_argument("--vocab", type=int, default=256)

    train = sub.add_parser("train", help="train one configuration and write its report")
    _add_common(train)
    train.add_argument("--epochs", type=int, help="override the epoch count")
    train.add_argument("--save-params", help="also save trained parameters (.npz)")

    ev = sub.add_parser("eval", help="evaluate saved parameters on a dataset split")
    _add_common(ev)
    ev.add_argument("--epochs", type=int, help=argparse.SUPPRESS)
    ev.add_argument("--params", required=True, help="parameter file written by train --save-params")
    ev.add_argument("--split", choices=["train", "val", "test", "all"], default="test")

    ab = sub.add_parser("ablate", help="run all 16 ablation-switch combinations")
    _add_common(ab)
    ab.add_argument("--epochs", type=int, help="override the epoch count for every row")

    sub.add_parser("gradcheck", help="finite-difference check of every differentiable op")
    return parser


def _cmd_gen(args) -> int:
    out_dir = Path(args.out) if args.out else _out_path("data", None)
    manifest, records = generate_synthetic(
        out_dir, classes=args.classes, per_class=args.per_class, seed=args.seed,
        channels=args.channels, height=args.height, width=args.width,
        seq_len=args.seq_len, vocab_size=args.vocab, image_noise=args.noise,
    )
    probe = nearest_centroid_accuracy(records, manifest.classes)
    print(f"wrote {manifest.count} records ({manifest.classes} classes) to {out_dir}")
    print(f"nearest-centroid probe on raw image features: {probe:.3f}")
    return EXIT_OK


def _cmd_train(args) -> int:
    config = _load_config(args)
    result = run(config)
    out = _out_path(config.output_path, args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_report(result.report.to_dict(), out)
    if args.save_params:
        result.params.save(args.save_params)
    final = result.report.final
    print(f"[{result.report.ablation}] test_acc={final['test_acc']:.4f} "
          f"test_macro_f1={final['test_macro_f1']:.4f}")
    print(f"report written to {out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    config = _load_config(args)
    _, records = load_dataset(config.dataset_dir)
    params = ModelParams.init(config, derive_rng(config.seed, STREAM_MODEL_INIT))
    try:
        params.load(args.params)
    except FileNotFoundError:
        raise ConfigError(f"parameter file not found: {args.params}")
    except ValueError as err:
        raise ConfigError(str(err))
    if args.split == "all":
        subset = records
    else:
        train_set, val_set, test_set = split_dataset(records, SplitSpec(seed=config.seed))
        subset = {"train": train_set, "val": val_set, "test": test_set}[args.split]
    result = evaluate(params, subset, config)
    payload = {
        "split": args.split,
        "count": len(subset),
        "acc": accuracy(result.confusion),
        "macro_f1": macro_f1(result.confusion),
    }
    text = json.dumps(payload, indent=2, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return EXIT_OK


def _cmd_ablate(args) -> int:
    config = _load_config(args)
    grid = run_ablation_grid(config)
    out = _out_path("ablation_grid.json", args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(report_json_bytes(grid))
    width = max(len(r["label"]) for r in grid["rows"])
    print(f"{'configuration':<{width}}  test_acc  test_macro_f1")
    for row in grid["rows"]:
        print(f"{row['label']:<{width}}  {row['test_acc']:>8.4f}  {row['test_macro_f1']:>13.4f}")
    print(f"grid written to {out}")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    from mmsent.verify import format_table, run_gradcheck

    rows = run_gradcheck()
    print(format_table(rows))
    if all(row.passed for row in rows):
        print("all gradient checks passed")
        return EXIT_OK
    print("gradient check FAILED", file=sys.stderr)
    return EXIT_NUMERICAL


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        handler = {
            "gen": _cmd_gen,
            "train": _cmd_train,
            "eval": _cmd_eval,
            "ablate": _cmd_ablate,
            "gradcheck": _cmd_gradcheck,
        }[args.command]
        return handler(args)
    except ConfigError as err:
        print(f"error: config: {err}", file=sys.stderr)
        return EXIT_USAGE
    except DatasetError as err:
        print(f"error: dataset: {err}", file=sys.stderr)
        return EXIT_DATASET
    except (NumericalError, DomainError) as err:
        print(f"error: numerical: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
