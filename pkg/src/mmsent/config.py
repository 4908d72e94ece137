"""Experiment configuration: one serializable record describes a full run."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path


class ConfigError(ValueError):
    """A configuration value or combination is invalid."""


@dataclass
class ExperimentConfig:
    """Every knob of one experiment; defaults give a runnable desk-scale setup."""

    # dimensions
    d_t: int = 32
    n_t_max: int = 16
    channels: int = 8
    height: int = 4
    width: int = 4
    heads: int = 4
    image_blocks: int = 2
    fusion_blocks: int = 2
    cbam_reduction: int = 4
    d_attn: int = 32
    vocab_size: int = 256
    classes: int = 3
    # objective
    lambda_sc: float = 1.0
    lambda_supcon: float = 1.0
    temperature: float = 0.07
    head_activation: str = "gelu"
    # optimizer
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 1e-2
    # schedule
    batch_size: int = 8
    epochs: int = 50
    # augmentation
    augment_sigma: float = 0.1
    token_drop_prob: float = 0.15
    # ablation switches
    use_bilstm: bool = True
    use_cnn: bool = True
    use_cbam: bool = True
    use_supcon: bool = True
    # run plumbing
    seed: int = 42
    dataset_dir: str = "data"
    output_path: str = "report.json"

    @property
    def n_i(self) -> int:
        return self.height * self.width

    def validate(self) -> "ExperimentConfig":
        if self.d_t % 2 != 0:
            raise ConfigError(f"d_t must be even for width-preserving BiLSTM layers, got {self.d_t}")
        if self.d_t % self.heads != 0:
            raise ConfigError(f"d_t={self.d_t} not divisible by heads={self.heads}")
        if self.d_t % self.cbam_reduction != 0:
            raise ConfigError(f"cbam_reduction={self.cbam_reduction} must divide d_t={self.d_t}")
        if self.classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.classes}")
        if self.image_blocks < 1 or self.fusion_blocks < 1:
            raise ConfigError("need at least one transformer block per encoder")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2 for contrastive pairs, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be positive, got {self.epochs}")
        if not self.temperature > 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if self.lambda_sc < 0 or self.lambda_supcon < 0 or (self.lambda_sc == 0 and self.lambda_supcon == 0):
            raise ConfigError("loss weights must be non-negative and not both zero")
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not 0 <= self.token_drop_prob < 1 or self.augment_sigma < 0:
            raise ConfigError("augmentation needs token_drop_prob in [0,1) and sigma >= 0")
        if self.head_activation not in ("gelu", "none"):
            raise ConfigError(f"head_activation must be 'gelu' or 'none', got {self.head_activation!r}")
        if min(self.channels, self.height, self.width, self.n_t_max, self.vocab_size) < 1:
            raise ConfigError("all dimensions must be positive")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**values).validate()

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            values = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as err:
            raise ConfigError(f"config file {path} is not valid JSON: {err}")
        if not isinstance(values, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        return cls.from_dict(values)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes).validate()


def mvsa_style() -> ExperimentConfig:
    """Three-way polarity profile (the default)."""
    return ExperimentConfig().validate()


def hfm_style() -> ExperimentConfig:
    """Binary profile with the larger documented batch."""
    return ExperimentConfig(classes=2, batch_size=24).validate()
