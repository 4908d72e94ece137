"""Image branch: projected feature maps through a transformer encoder.

A (c, h, w) feature map stands in for a convolutional backbone's last
layer. Each of the h*w spatial positions carries a c-channel vector;
a shared linear map projects those to the text feature width, giving a
sequence of h*w image tokens that a small post-norm transformer then
contextualizes globally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from mmsent import tensor as tz
from mmsent.tensor import DomainError, ShapeError, Tensor


@dataclass
class ImageFeatureMap:
    """Validated (channels, height, width) stack of real feature values."""

    channels: int
    height: int
    width: int
    data: Tensor

    def __post_init__(self) -> None:
        want = (self.channels, self.height, self.width)
        if min(want) < 1:
            raise ShapeError(f"feature map dims must be positive, got {want}")
        if self.data.shape != want:
            raise ShapeError(f"feature map data has shape {self.data.shape}, declared {want}")
        if not np.all(np.isfinite(self.data.data)):
            raise DomainError("feature map contains non-finite values")

    @property
    def positions(self) -> int:
        return self.height * self.width


def ingest_feature_map(values, channels: int, height: int, width: int) -> ImageFeatureMap:
    """Validate raw values (flat or shaped) against the declared dims."""
    arr = np.asarray(values, dtype=np.float64)
    want = channels * height * width
    if arr.size != want:
        raise ShapeError(
            f"feature map holds {arr.size} values, expected {want} for dims "
            f"({channels}, {height}, {width})"
        )
    return ImageFeatureMap(channels, height, width, Tensor(arr.reshape(channels, height, width)))


def project_flatten(mc: ImageFeatureMap, w_m: Tensor, b_m: Tensor) -> Tensor:
    """Map each spatial position's channel vector to the token width.

    Rows are ordered row-major over (height, width); output is
    (h*w, d) where d is the projection width.
    """
    if w_m.shape[0] != mc.channels:
        raise ShapeError(f"projection expects {w_m.shape[0]} channels, feature map has {mc.channels}")
    d = w_m.shape[1]
    if b_m.shape != (d,):
        raise ShapeError(f"projection bias must be ({d},), got {b_m.shape}")
    per_position = tz.transpose(tz.reshape(mc.data, (mc.channels, mc.positions)))
    return tz.add_rowvec(tz.matmul(per_position, w_m), b_m)


@dataclass
class EncoderBlockParams:
    """One post-norm transformer block: multi-head attention + 4x FFN."""

    heads: int
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor
    ff1: Tensor
    ff1_b: Tensor
    ff2: Tensor
    ff2_b: Tensor
    ln1_gain: Tensor
    ln1_bias: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor

    def __post_init__(self) -> None:
        d = self.w_q.shape[0]
        if d % self.heads != 0:
            raise ShapeError(f"model width {d} not divisible by {self.heads} heads")
        for name in ("w_q", "w_k", "w_v", "w_o"):
            if getattr(self, name).shape != (d, d):
                raise ShapeError(f"{name} must be ({d}, {d}), got {getattr(self, name).shape}")
        if self.ff1.shape != (d, 4 * d) or self.ff2.shape != (4 * d, d):
            raise ShapeError("feed-forward must expand d -> 4d -> d")

    @property
    def width(self) -> int:
        return self.w_q.shape[0]

    @classmethod
    def init(cls, rng: np.random.Generator, d: int, heads: int) -> "EncoderBlockParams":
        def mat(rows, cols):
            bound = np.sqrt(6.0 / (rows + cols))
            return Tensor(rng.uniform(-bound, bound, (rows, cols)), requires_grad=True)

        return cls(
            heads=heads,
            w_q=mat(d, d), w_k=mat(d, d), w_v=mat(d, d), w_o=mat(d, d),
            ff1=mat(d, 4 * d), ff1_b=Tensor(np.zeros(4 * d), requires_grad=True),
            ff2=mat(4 * d, d), ff2_b=Tensor(np.zeros(d), requires_grad=True),
            ln1_gain=Tensor(np.ones(d), requires_grad=True),
            ln1_bias=Tensor(np.zeros(d), requires_grad=True),
            ln2_gain=Tensor(np.ones(d), requires_grad=True),
            ln2_bias=Tensor(np.zeros(d), requires_grad=True),
        )

    def tensors(self) -> dict[str, Tensor]:
        names = ["w_q", "w_k", "w_v", "w_o", "ff1", "ff1_b", "ff2", "ff2_b",
                 "ln1_gain", "ln1_bias", "ln2_gain", "ln2_bias"]
        return {n: getattr(self, n) for n in names}


def multi_head_attention(x: Tensor, p: EncoderBlockParams) -> tuple[Tensor, list[Tensor]]:
    """Scaled dot-product self-attention; also returns per-head weight matrices."""
    d = p.width
    if x.data.ndim != 2 or x.shape[1] != d:
        raise ShapeError(f"attention expects (n, {d}), got {x.shape}")
    d_head = d // p.heads
    inv_sqrt = 1.0 / np.sqrt(d_head)
    q = tz.matmul(x, p.w_q)
    k = tz.matmul(x, p.w_k)
    v = tz.matmul(x, p.w_v)
    outs = []
    attns = []
    for h in range(p.heads):
        lo, hi = h * d_head, (h + 1) * d_head
        qh = tz.slice_axis(q, 1, lo, hi)
        kh = tz.slice_axis(k, 1, lo, hi)
        vh = tz.slice_axis(v, 1, lo, hi)
        scores = tz.scale(tz.matmul(qh, tz.transpose(kh)), inv_sqrt)
        weights = tz.softmax(scores, axis=1)
        attns.append(weights)
        outs.append(tz.matmul(weights, vh))
    return tz.matmul(tz.concat(outs, axis=1), p.w_o), attns


def transformer_block(x: Tensor, p: EncoderBlockParams) -> Tensor:
    """Post-norm residual block: LN(x + MHA(x)) then LN(y + FFN(y))."""
    attended, _ = multi_head_attention(x, p)
    y = tz.layer_norm(tz.add(x, attended), p.ln1_gain, p.ln1_bias)
    hidden = tz.gelu(tz.add_rowvec(tz.matmul(y, p.ff1), p.ff1_b))
    ff = tz.add_rowvec(tz.matmul(hidden, p.ff2), p.ff2_b)
    return tz.layer_norm(tz.add(y, ff), p.ln2_gain, p.ln2_bias)


def sinusoidal_positions(n: int, d: int) -> np.ndarray:
    """Fixed sin/cos position table: sin on even columns, cos on odd."""
    pos = np.arange(n)[:, None]
    idx = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (idx // 2)) / d)
    table = np.where(idx % 2 == 0, np.sin(angle), np.cos(angle))
    return table


def encode_image(m1: Tensor, blocks: list[EncoderBlockParams], positional: bool = True) -> Tensor:
    """Contextualize image tokens with the encoder stack.

    ``positional=False`` skips the sinusoidal table; it exists so tests
    can assert permutation equivariance of the bare blocks.
    """
    if not blocks:
        raise ValueError("encode_image needs at least one transformer block")
    x = m1
    if positional:
        x = tz.add(x, Tensor(sinusoidal_positions(*m1.shape)))
    for block in blocks:
        x = transformer_block(x, block)
    return x
