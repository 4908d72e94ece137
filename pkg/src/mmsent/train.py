"""AdamW optimization, embedding-level augmentation, splitting, and the epoch loop.

Each training batch is built two-view: every sample is forwarded both
as-is and as a seeded augmented copy (token dropout to the mask id plus
Gaussian noise on the image features). That doubles the contrastive
batch and guarantees every anchor at least one positive, so the
degenerate all-unique case cannot occur during training.

All randomness flows through tagged seed streams, so a (config, seed,
dataset) triple fixes the whole trajectory bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from mmsent import losses as ls
from mmsent import tensor as tz
from mmsent.config import ConfigError, ExperimentConfig
from mmsent.data import SampleRecord
from mmsent.metrics import ConfusionMatrix
from mmsent.model import ModelParams, forward_sample
from mmsent.tensor import ShapeError, Tensor
from mmsent.text import CLS_ID, MASK_ID

# Stream tags keep derived RNGs from colliding across purposes.
STREAM_MODEL_INIT = 0
STREAM_AUGMENT = 1
STREAM_BATCH_ORDER = 2
STREAM_SPLIT = 3


class NumericalError(RuntimeError):
    """The loss left the finite range."""


def derive_rng(*keys: int) -> np.random.Generator:
    return np.random.default_rng(list(keys))


# ---------------------------------------------------------------------------
# AdamW


@dataclass
class AdamWState:
    """Per-parameter moments plus the shared hyperparameters."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-2

    @classmethod
    def for_param(cls, param: np.ndarray, config: ExperimentConfig) -> "AdamWState":
        return cls(
            m=np.zeros_like(param), v=np.zeros_like(param), step=0,
            lr=config.lr, beta1=config.beta1, beta2=config.beta2,
            eps=config.adam_eps, weight_decay=config.weight_decay,
        )


def adamw_step(param: np.ndarray, grad: np.ndarray, state: AdamWState) -> tuple[np.ndarray, AdamWState]:
    """One decoupled-weight-decay Adam update, in place."""
    if param.shape != grad.shape or state.m.shape != param.shape:
        raise ShapeError(f"adamw_step: param {param.shape}, grad {grad.shape}, state {state.m.shape} disagree")
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1 ** state.step)
    v_hat = state.v / (1.0 - state.beta2 ** state.step)
    param -= state.lr * (m_hat / (np.sqrt(v_hat) + state.eps) + state.weight_decay * param)
    return param, state


class AdamW:
    """Holds one AdamWState per named parameter."""

    def __init__(self, params: dict[str, Tensor], config: ExperimentConfig):
        self.states = {name: AdamWState.for_param(t.data, config) for name, t in params.items()}

    def step(self, params: dict[str, Tensor]) -> None:
        for name, t in params.items():
            grad = t.grad if t.grad is not None else np.zeros_like(t.data)
            adamw_step(t.data, grad, self.states[name])


# ---------------------------------------------------------------------------
# augmentation


@dataclass
class AugmentSpec:
    """Embedding-level augmentation, fully determined by (seed, sample id, epoch)."""

    gaussian_sigma: float = 0.1
    token_drop_prob: float = 0.15
    seed: int = 0

    def __post_init__(self) -> None:
        if self.gaussian_sigma < 0:
            raise ValueError(f"gaussian_sigma must be non-negative, got {self.gaussian_sigma}")
        if not 0.0 <= self.token_drop_prob < 1.0:
            raise ValueError(f"token_drop_prob must lie in [0, 1), got {self.token_drop_prob}")

    @classmethod
    def from_config(cls, config: ExperimentConfig) -> "AugmentSpec":
        return cls(gaussian_sigma=config.augment_sigma, token_drop_prob=config.token_drop_prob,
                   seed=config.seed)


def augment(sample: SampleRecord, spec: AugmentSpec, epoch: int) -> SampleRecord:
    """Drop non-class tokens to the mask id and add Gaussian image noise."""
    rng = derive_rng(spec.seed, STREAM_AUGMENT, sample.id, epoch)
    tokens = list(sample.tokens)
    if spec.token_drop_prob > 0.0:
        drops = rng.random(len(tokens) - 1) < spec.token_drop_prob
        tokens = [tokens[0]] + [MASK_ID if hit else t for t, hit in zip(tokens[1:], drops)]
    assert tokens[0] == CLS_ID
    image = sample.image
    if spec.gaussian_sigma > 0.0:
        image = image + rng.normal(0.0, spec.gaussian_sigma, image.shape)
    else:
        image = image.copy()
    return SampleRecord(id=sample.id, label=sample.label, tokens=tokens, image=image)


# ---------------------------------------------------------------------------
# splitting


@dataclass
class SplitSpec:
    """8:1:1 split with a seeded shuffle."""

    seed: int = 0
    ratios: tuple[int, int, int] = (8, 1, 1)

    def __post_init__(self) -> None:
        if tuple(self.ratios) != (8, 1, 1):
            raise ValueError(f"only the 8:1:1 split is supported, got {self.ratios}")


def split_dataset(records: list[SampleRecord], spec: SplitSpec) -> tuple[list, list, list]:
    """Seeded shuffle, then test = val = floor(n/10) and train = remainder."""
    n = len(records)
    if n < 10:
        raise ValueError(f"need at least 10 records to split 8:1:1, got {n}")
    order = derive_rng(spec.seed, STREAM_SPLIT).permutation(n)
    shuffled = [records[i] for i in order]
    tenth = n // 10
    train = shuffled[: n - 2 * tenth]
    val = shuffled[n - 2 * tenth: n - tenth]
    test = shuffled[n - tenth:]
    return train, val, test


# ---------------------------------------------------------------------------
# the epoch loop


@dataclass
class EpochStats:
    loss_total: float
    loss_sc: float
    loss_supcon: float
    train_acc: float


def _batches(records: list[SampleRecord], batch_size: int, rng: np.random.Generator):
    order = rng.permutation(len(records))
    for start in range(0, len(order), batch_size):
        yield [records[i] for i in order[start:start + batch_size]]


def train_epoch(
    params: ModelParams,
    train_set: list[SampleRecord],
    config: ExperimentConfig,
    optimizer: AdamW,
    epoch: int,
) -> EpochStats:
    """One pass over the training set with two-view batches and AdamW steps."""
    if not train_set:
        raise ValueError("train_epoch on an empty training set")
    if config.batch_size < 2:
        raise ConfigError(f"batch_size must be >= 2, got {config.batch_size}")
    lambda_supcon = config.lambda_supcon if config.use_supcon else 0.0
    if config.lambda_sc == 0.0 and lambda_supcon == 0.0:
        raise ConfigError("nothing to optimize: lambda_sc is 0 and the contrastive term is off")

    named = params.named_parameters()
    spec = AugmentSpec.from_config(config)
    batch_rng = derive_rng(config.seed, STREAM_BATCH_ORDER, epoch)

    totals = np.zeros(3)
    correct = 0
    batches = 0
    for batch in _batches(train_set, config.batch_size, batch_rng):
        for t in named.values():
            t.zero_grad()

        ce_terms = []
        pooled_rows = []
        view_labels: list[int] = []
        for rec in batch:
            for view in (rec, augment(rec, spec, epoch)):
                out = forward_sample(params, view.tokens, view.image, config)
                ce_terms.append(ls.cross_entropy(out.logits, view.label))
                pooled_rows.append(out.pooled.vector)
                view_labels.append(view.label)
                if view is rec and int(np.argmax(out.logits.data)) == rec.label:
                    correct += 1

        ce_mean = tz.scale(_sum(ce_terms), 1.0 / len(ce_terms))
        if lambda_supcon > 0.0:
            z = ls.normalize_rows(tz.stack_rows(pooled_rows))
            supcon = ls.supcon_loss(ls.ContrastiveBatch(z, view_labels, config.temperature))
            loss = ls.combined_loss(ce_mean, supcon, ls.LossWeights(config.lambda_sc, lambda_supcon))
            supcon_value = supcon.item()
        else:
            loss = tz.scale(ce_mean, config.lambda_sc)
            supcon_value = 0.0

        if not math.isfinite(loss.item()):
            raise NumericalError(f"non-finite loss at epoch {epoch}")
        loss.backward()
        optimizer.step(named)

        totals += (loss.item(), ce_mean.item(), supcon_value)
        batches += 1

    mean = totals / batches
    return EpochStats(loss_total=float(mean[0]), loss_sc=float(mean[1]),
                      loss_supcon=float(mean[2]), train_acc=correct / len(train_set))


def _sum(terms):
    acc = terms[0]
    for t in terms[1:]:
        acc = tz.add(acc, t)
    return acc


@dataclass
class EvalResult:
    confusion: ConfusionMatrix
    pooled: np.ndarray  # (n, d_t) raw pooled vectors
    labels: list[int]


def evaluate(params: ModelParams, records: list[SampleRecord], config: ExperimentConfig) -> EvalResult:
    """Inference-only pass; returns the confusion matrix and pooled vectors."""
    cm = ConfusionMatrix.zeros(config.classes)
    pooled = []
    labels = []
    with tz.no_grad():
        for rec in records:
            out = forward_sample(params, rec.tokens, rec.image, config)
            cm.add(rec.label, int(np.argmax(out.logits.data)))
            pooled.append(out.pooled.vector.data.copy())
            labels.append(rec.label)
    return EvalResult(confusion=cm, pooled=np.stack(pooled) if pooled else np.zeros((0, config.d_t)),
                      labels=labels)


__all__ = [
    "AdamW", "AdamWState", "AugmentSpec", "EpochStats", "EvalResult", "NumericalError",
    "SplitSpec", "adamw_step", "augment", "derive_rng", "evaluate", "split_dataset",
    "train_epoch", "STREAM_MODEL_INIT",
]
