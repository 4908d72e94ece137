"""Fusion stage: concat -> residual conv -> CBAM -> transformer -> pooled vector.

CBAM is adapted from 2-d images to 1-d token sequences: "channels" are
the d feature columns and the "spatial" axis is the sequence of
n_t + n_i fused positions. Channel attention gates columns with a
shared two-layer MLP over mean- and max-pooled columns; spatial
attention gates positions with a width-7 convolution over the
channel-pooled pair. Both gates are sigmoids, so CBAM strictly
contracts every nonzero element.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mmsent import tensor as tz
from mmsent.tensor import ShapeError, Tensor
from mmsent.image import EncoderBlockParams, transformer_block

SPATIAL_KERNEL_WIDTH = 7


@dataclass
class FusedSequence:
    """The fused token sequence of length n_t + n_i."""

    tokens: Tensor

    def __post_init__(self) -> None:
        if self.tokens.data.ndim != 2:
            raise ShapeError(f"fused sequence must be (length, d), got {self.tokens.shape}")

    @property
    def length(self) -> int:
        return self.tokens.shape[0]

    @property
    def width(self) -> int:
        return self.tokens.shape[1]


@dataclass
class CbamParams:
    """Channel-MLP (shared, no bias) plus the width-7 spatial conv."""

    w0: Tensor
    w1: Tensor
    spatial_kernel: Tensor
    spatial_bias: Tensor
    reduction: int

    def __post_init__(self) -> None:
        d = self.w0.shape[0]
        if d % self.reduction != 0:
            raise ShapeError(f"reduction {self.reduction} does not divide width {d}")
        if self.w0.shape != (d, d // self.reduction) or self.w1.shape != (d // self.reduction, d):
            raise ShapeError(f"channel MLP shapes {self.w0.shape} / {self.w1.shape} inconsistent")
        if self.spatial_kernel.shape != (SPATIAL_KERNEL_WIDTH, 2, 1):
            raise ShapeError(f"spatial kernel must be ({SPATIAL_KERNEL_WIDTH}, 2, 1), got {self.spatial_kernel.shape}")

    @property
    def width(self) -> int:
        return self.w0.shape[0]

    @classmethod
    def init(cls, rng: np.random.Generator, d: int, reduction: int) -> "CbamParams":
        def mat(rows, cols):
            bound = np.sqrt(6.0 / (rows + cols))
            return Tensor(rng.uniform(-bound, bound, (rows, cols)), requires_grad=True)

        return cls(
            w0=mat(d, d // reduction),
            w1=mat(d // reduction, d),
            spatial_kernel=Tensor(rng.uniform(-0.5, 0.5, (SPATIAL_KERNEL_WIDTH, 2, 1)), requires_grad=True),
            spatial_bias=Tensor(np.zeros(1), requires_grad=True),
            reduction=reduction,
        )

    def tensors(self) -> dict[str, Tensor]:
        return {
            "w0": self.w0,
            "w1": self.w1,
            "spatial_kernel": self.spatial_kernel,
            "spatial_bias": self.spatial_bias,
        }


@dataclass
class FusionCnnParams:
    """Width-3 same-padding conv (d -> d) used inside the residual fusion block."""

    kernel: Tensor
    bias: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, d: int) -> "FusionCnnParams":
        bound = np.sqrt(6.0 / (3 * d + d))
        return cls(
            kernel=Tensor(rng.uniform(-bound, bound, (3, d, d)), requires_grad=True),
            bias=Tensor(np.zeros(d), requires_grad=True),
        )

    def tensors(self) -> dict[str, Tensor]:
        return {"kernel": self.kernel, "bias": self.bias}


@dataclass
class AttentionPoolParams:
    """Additive attention over positions plus the fully connected output map."""

    w_a: Tensor
    v_a: Tensor
    w_r: Tensor
    b_r: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, d: int, d_attn: int) -> "AttentionPoolParams":
        def mat(rows, cols):
            bound = np.sqrt(6.0 / (rows + cols))
            return Tensor(rng.uniform(-bound, bound, (rows, cols)), requires_grad=True)

        return cls(
            w_a=mat(d, d_attn),
            v_a=Tensor(rng.uniform(-0.5, 0.5, d_attn), requires_grad=True),
            w_r=mat(d, d),
            b_r=Tensor(np.zeros(d), requires_grad=True),
        )

    def tensors(self) -> dict[str, Tensor]:
        return {"w_a": self.w_a, "v_a": self.v_a, "w_r": self.w_r, "b_r": self.b_r}


@dataclass
class PooledRepresentation:
    """Single fused vector per sample; feeds both loss branches."""

    vector: Tensor


@dataclass
class FusionParams:
    cnn: FusionCnnParams
    cbam: CbamParams
    blocks: list[EncoderBlockParams]

    @classmethod
    def init(cls, rng: np.random.Generator, d: int, heads: int, n_blocks: int, reduction: int) -> "FusionParams":
        return cls(
            cnn=FusionCnnParams.init(rng, d),
            cbam=CbamParams.init(rng, d, reduction),
            blocks=[EncoderBlockParams.init(rng, d, heads) for _ in range(n_blocks)],
        )


def concat_modalities(t: Tensor, m: Tensor) -> Tensor:
    """Text rows first, then image rows."""
    if t.shape[1] != m.shape[1]:
        raise ShapeError(f"modalities disagree on feature width: {t.shape} vs {m.shape}")
    return tz.concat([t, m], axis=0)


def fusion_cnn(x: Tensor, p: FusionCnnParams) -> Tensor:
    """Residual local-feature block: x + GELU(conv(x))."""
    return tz.add(x, tz.gelu(tz.conv1d(x, p.kernel, p.bias)))


def _channel_mlp(v: Tensor, p: CbamParams) -> Tensor:
    return tz.vecmat(tz.relu(tz.vecmat(v, p.w0)), p.w1)


def cbam_channel(x: Tensor, p: CbamParams) -> tuple[Tensor, Tensor]:
    """Sigmoid gate per feature column from pooled-column statistics."""
    avg = tz.reduce(x, 0, "mean")
    mx = tz.reduce(x, 0, "max")
    weights = tz.sigmoid(tz.add(_channel_mlp(avg, p), _channel_mlp(mx, p)))
    return tz.scale_cols(x, weights), weights


def cbam_spatial(x: Tensor, p: CbamParams) -> tuple[Tensor, Tensor]:
    """Sigmoid gate per sequence position from channel-pooled statistics."""
    avg = tz.reshape(tz.reduce(x, 1, "mean"), (x.shape[0], 1))
    mx = tz.reshape(tz.reduce(x, 1, "max"), (x.shape[0], 1))
    pooled = tz.concat([avg, mx], axis=1)
    scores = tz.conv1d(pooled, p.spatial_kernel, p.spatial_bias)
    weights = tz.sigmoid(tz.reshape(scores, (x.shape[0],)))
    return tz.scale_rows(x, weights), weights


def cbam(x: Tensor, p: CbamParams, enabled: bool = True) -> Tensor:
    """Channel attention, then spatial attention; identity when disabled."""
    if not enabled:
        return x
    channel_scaled, _ = cbam_channel(x, p)
    spatial_scaled, _ = cbam_spatial(channel_scaled, p)
    return spatial_scaled


def fuse(t: Tensor, m: Tensor, p: FusionParams, use_cnn: bool = True, use_cbam: bool = True) -> FusedSequence:
    """Full fusion pipeline over the concatenated modalities."""
    x = concat_modalities(t, m)
    if use_cnn:
        x = fusion_cnn(x, p.cnn)
    x = cbam(x, p.cbam, enabled=use_cbam)
    for block in p.blocks:
        x = transformer_block(x, block)
    return FusedSequence(tokens=x)


def attention_pool_with_weights(f: FusedSequence, p: AttentionPoolParams) -> tuple[PooledRepresentation, Tensor]:
    """Additive attention pooling; returns the pooled vector and the weights."""
    x = f.tokens
    scores = tz.matmul(tz.tanh(tz.matmul(x, p.w_a)), tz.reshape(p.v_a, (p.v_a.size, 1)))
    alpha = tz.softmax(tz.reshape(scores, (x.shape[0],)), axis=0)
    pooled = tz.reshape(tz.matmul(tz.reshape(alpha, (1, x.shape[0])), x), (x.shape[1],))
    out = tz.gelu(tz.add(tz.vecmat(pooled, p.w_r), p.b_r))
    return PooledRepresentation(vector=out), alpha


def attention_pool(f: FusedSequence, p: AttentionPoolParams) -> PooledRepresentation:
    pooled, _ = attention_pool_with_weights(f, p)
    return pooled
