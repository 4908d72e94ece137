"""Experiment orchestration: one full run and the 16-row ablation grid.

A run is a pure function of (config, dataset): load and cross-check the
data, split 8:1:1, train for the configured epochs while evaluating the
validation split each epoch, evaluate the test split once at the end,
and assemble a report. Repeating a run with the same inputs reproduces
the report byte-for-byte.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from mmsent.config import ConfigError, ExperimentConfig
from mmsent.data import DatasetManifest, SampleRecord, load_dataset
from mmsent.metrics import Report, accuracy, build_report, macro_f1
from mmsent.model import ModelParams
from mmsent.train import (
    STREAM_MODEL_INIT,
    AdamW,
    EvalResult,
    SplitSpec,
    derive_rng,
    evaluate,
    split_dataset,
    train_epoch,
)

ABLATION_FLAGS = ("use_bilstm", "use_cnn", "use_cbam", "use_supcon")


def check_compatible(config: ExperimentConfig, manifest: DatasetManifest) -> None:
    pairs = [
        ("classes", config.classes, manifest.classes),
        ("channels", config.channels, manifest.channels),
        ("height", config.height, manifest.height),
        ("width", config.width, manifest.width),
        ("vocab_size", config.vocab_size, manifest.vocab_size),
    ]
    for name, want, got in pairs:
        if want != got:
            raise ConfigError(f"config {name}={want} does not match dataset manifest {name}={got}")
    if manifest.seq_len > config.n_t_max:
        raise ConfigError(f"dataset sequences of length {manifest.seq_len} exceed n_t_max={config.n_t_max}")


@dataclass
class RunResult:
    report: Report
    params: ModelParams
    train_set: list[SampleRecord]
    val_set: list[SampleRecord]
    test_set: list[SampleRecord]
    test_eval: EvalResult


def run(config: ExperimentConfig, dataset=None) -> RunResult:
    """Train and evaluate one configuration end to end."""
    config.validate()
    if dataset is None:
        manifest, records = load_dataset(config.dataset_dir)
    else:
        manifest, records = dataset
    check_compatible(config, manifest)

    train_set, val_set, test_set = split_dataset(records, SplitSpec(seed=config.seed))
    params = ModelParams.init(config, derive_rng(config.seed, STREAM_MODEL_INIT))
    optimizer = AdamW(params.named_parameters(), config)

    epoch_rows = []
    for epoch in range(1, config.epochs + 1):
        stats = train_epoch(params, train_set, config, optimizer, epoch)
        val_eval = evaluate(params, val_set, config)
        epoch_rows.append({
            "epoch": epoch,
            "loss_total": stats.loss_total,
            "loss_sc": stats.loss_sc,
            "loss_supcon": stats.loss_supcon,
            "train_acc": stats.train_acc,
            "val_acc": accuracy(val_eval.confusion),
            "val_macro_f1": macro_f1(val_eval.confusion),
        })

    test_eval = evaluate(params, test_set, config)
    final = {
        "test_acc": accuracy(test_eval.confusion),
        "test_macro_f1": macro_f1(test_eval.confusion),
    }
    report = build_report(epoch_rows, final, config)
    return RunResult(report=report, params=params, train_set=train_set,
                     val_set=val_set, test_set=test_set, test_eval=test_eval)


def run_ablation_grid(config: ExperimentConfig, dataset=None) -> dict:
    """Run every 2^4 combination of the ablation switches under one seed.

    Rows are ordered all-on first, then lexicographically by which flags
    are off; every row embeds the full per-run report, so the all-on row
    is byte-identical to a standalone run of the same config.
    """
    config.validate()
    if dataset is None:
        dataset = load_dataset(config.dataset_dir)

    combos = sorted(itertools.product([True, False], repeat=len(ABLATION_FLAGS)),
                    key=lambda c: sum(not v for v in c))
    rows = []
    for combo in combos:
        flags = dict(zip(ABLATION_FLAGS, combo))
        result = run(config.replace(**flags), dataset=dataset)
        rows.append({
            "flags": flags,
            "label": result.report.ablation,
            "test_acc": result.report.final["test_acc"],
            "test_macro_f1": result.report.final["test_macro_f1"],
            "report": result.report.to_dict(),
        })
    return {
        "schema": 1,
        "kind": "ablation_grid",
        "base_config": config.to_dict(),
        "rows": rows,
    }
