"""Classification metrics and run reports.

Accuracy is trace/total of the confusion matrix. F1 is macro-averaged:
per-class precision, recall and F1 with the 0/0 -> 0 convention, then
an unweighted mean over all classes (absent classes count as 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from mmsent.config import ExperimentConfig


@dataclass
class ConfusionMatrix:
    """K x K counts; rows are true classes, columns predictions."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ValueError(f"confusion matrix must be square, got shape {self.counts.shape}")
        if (self.counts < 0).any():
            raise ValueError("confusion matrix counts must be non-negative")

    @classmethod
    def zeros(cls, k: int) -> "ConfusionMatrix":
        return cls(np.zeros((k, k), dtype=np.int64))

    @classmethod
    def from_pairs(cls, true_labels, predicted, k: int) -> "ConfusionMatrix":
        cm = cls.zeros(k)
        for t, p in zip(true_labels, predicted):
            cm.add(int(t), int(p))
        return cm

    def add(self, true_label: int, predicted: int) -> None:
        self.counts[true_label, predicted] += 1

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise ValueError("accuracy of an empty confusion matrix")
    return float(np.trace(cm.counts)) / cm.total


def macro_f1(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise ValueError("macro F1 of an empty confusion matrix")
    k = cm.counts.shape[0]
    f1s = []
    for c in range(k):
        tp = float(cm.counts[c, c])
        col = float(cm.counts[:, c].sum())
        row = float(cm.counts[c, :].sum())
        precision = tp / col if col > 0 else 0.0
        recall = tp / row if row > 0 else 0.0
        f1s.append(2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0)
    return float(np.mean(f1s))


def ablation_label(config: ExperimentConfig) -> str:
    """Row label listing the active switchable components."""
    parts = []
    if config.use_bilstm:
        parts.append("BiLSTM")
    if config.use_cnn:
        parts.append("MLFC")
    if config.use_cbam:
        parts.append("CBAM")
    if config.use_supcon:
        parts.append("SCSupConLoss")
    return "+".join(parts) if parts else "Base"


@dataclass
class Report:
    """Serializable record of one run: config echo, loss curves, final metrics."""

    ablation: str
    config: dict
    epochs: list[dict] = field(default_factory=list)
    final: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "ablation_label": self.ablation,
            "config": self.config,
            "epochs": self.epochs,
            "final": self.final,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Report":
        return cls(ablation=d["ablation_label"], config=d["config"],
                   epochs=d["epochs"], final=d["final"])


def build_report(epoch_rows: list[dict], final: dict, config: ExperimentConfig) -> Report:
    return Report(ablation=ablation_label(config), config=config.to_dict(),
                  epochs=epoch_rows, final=final)
