"""Training objectives: supervised contrastive loss, classification loss, and their weighted sum.

The contrastive term sums, over every anchor i with at least one
same-label partner, the mean over that positive set P(i) of
-log( exp(z_i.z_p / tau) / sum_{a != i} exp(z_i.z_a / tau) ).
Embeddings are L2-normalized first, so the loss is invariant under a
common rotation of the batch and the temperature acts on cosine
similarities. Anchors whose label is unique in the batch are skipped;
a batch where every label is unique is rejected as degenerate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mmsent import tensor as tz
from mmsent.tensor import ShapeError, Tensor


class DegenerateBatchError(ValueError):
    """Every anchor's positive set is empty (all labels unique)."""


def normalize_rows(z: Tensor) -> Tensor:
    """Scale each row to unit L2 norm (differentiably)."""
    if z.data.ndim != 2:
        raise ShapeError(f"normalize_rows expects (n, d), got {z.shape}")
    n, d = z.shape
    sumsq = tz.scale(tz.reduce(tz.mul(z, z), 1, "mean"), float(d))
    inv_norm = tz.exp(tz.scale(tz.log(sumsq), -0.5))
    return tz.scale_rows(z, inv_norm)


@dataclass
class ContrastiveBatch:
    """Unit-norm embeddings with labels and a softmax temperature."""

    embeddings: Tensor
    labels: list[int]
    temperature: float = 0.07

    def __post_init__(self) -> None:
        n = len(self.labels)
        if n < 2:
            raise ValueError(f"contrastive batch needs at least 2 samples, got {n}")
        if self.embeddings.data.ndim != 2 or self.embeddings.shape[0] != n:
            raise ShapeError(f"embeddings {self.embeddings.shape} do not match {n} labels")
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        norms = np.linalg.norm(self.embeddings.data, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-10:
            raise ValueError("embeddings must be unit-norm; pass them through normalize_rows first")


def supcon_loss(batch: ContrastiveBatch) -> Tensor:
    """Supervised contrastive loss over all anchors with non-empty positive sets."""
    z = batch.embeddings
    labels = np.asarray(batch.labels)
    n = len(batch.labels)

    same = labels[:, None] == labels[None, :]
    np.fill_diagonal(same, False)
    positive_counts = same.sum(axis=1)
    if not positive_counts.any():
        raise DegenerateBatchError("all labels unique: every positive set is empty")

    sim = tz.scale(tz.matmul(z, tz.transpose(z)), 1.0 / batch.temperature)

    # Stabilize with the detached per-row max over non-anchor entries.
    off_diag = sim.data.copy()
    np.fill_diagonal(off_diag, -np.inf)
    row_max = off_diag.max(axis=1)
    shifted = tz.sub(sim, Tensor(np.broadcast_to(row_max[:, None], (n, n)).copy()))

    non_self = np.ones((n, n))
    np.fill_diagonal(non_self, 0.0)
    exp_masked = tz.mul(tz.exp(shifted), Tensor(non_self))
    denom = tz.scale(tz.reduce(exp_masked, 1, "mean"), float(n))
    log_denom = tz.log(denom)
    # log_prob[i, p] = shifted[i, p] - log_denom[i]
    log_prob = tz.add(shifted, tz.scale_rows(Tensor(np.ones((n, n))), tz.scale(log_denom, -1.0)))

    anchor_weight = np.zeros((n, n))
    nonzero = positive_counts > 0
    anchor_weight[nonzero] = -same[nonzero].astype(np.float64) / positive_counts[nonzero, None]
    return tz.sum_all(tz.mul(log_prob, Tensor(anchor_weight)))


def classification_logits(r: Tensor, w_sc: Tensor, b_sc: Tensor, activation: str = "gelu") -> Tensor:
    """Class scores from the pooled vector: activation(r @ W + b)."""
    if r.data.ndim != 1 or r.shape[0] != w_sc.shape[0]:
        raise ShapeError(f"pooled vector {r.shape} does not match head weights {w_sc.shape}")
    if b_sc.shape != (w_sc.shape[1],):
        raise ShapeError(f"head bias {b_sc.shape} does not match {w_sc.shape[1]} classes")
    pre = tz.add(tz.vecmat(r, w_sc), b_sc)
    if activation == "gelu":
        return tz.gelu(pre)
    if activation == "none":
        return pre
    raise ValueError(f"head activation must be 'gelu' or 'none', got {activation!r}")


def cross_entropy(logits: Tensor, label: int) -> Tensor:
    """-log softmax(logits)[label], computed via a stable log-sum-exp."""
    if logits.data.ndim != 1:
        raise ShapeError(f"cross_entropy expects a logit vector, got {logits.shape}")
    k = logits.shape[0]
    if not 0 <= label < k:
        raise ValueError(f"label {label} out of range for {k} classes")
    shifted = tz.sub(logits, Tensor(logits.data.max()))
    lse = tz.log(tz.scale(tz.reduce(tz.exp(shifted), 0, "mean"), float(k)))
    picked = tz.reshape(tz.slice_axis(shifted, 0, label, label + 1), ())
    return tz.sub(lse, picked)


@dataclass
class LossWeights:
    """Coefficients of the combined objective."""

    sc: float = 1.0
    supcon: float = 1.0

    def __post_init__(self) -> None:
        if self.sc < 0 or self.supcon < 0:
            raise ValueError("loss weights must be non-negative")
        if self.sc == 0 and self.supcon == 0:
            raise ValueError("loss weights must not both be zero")


def combined_loss(l_sc: Tensor, l_supcon: Tensor, weights: LossWeights) -> Tensor:
    """Weighted sum of the classification and contrastive terms."""
    return tz.add(tz.scale(l_sc, weights.sc), tz.scale(l_supcon, weights.supcon))
