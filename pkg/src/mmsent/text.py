"""Text branch: trainable token embeddings into a double-layer BiLSTM.

Token id 0 is the reserved class-token slot at position 0 of every
sequence; id 1 is the mask token used by augmentation. Each BiLSTM
layer maps width d -> d by running forward and backward passes with
hidden size d/2 and concatenating them per position.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mmsent import tensor as tz
from mmsent.tensor import ShapeError, Tensor

CLS_ID = 0
MASK_ID = 1


@dataclass
class TokenSequence:
    """A token-id sequence whose first position is the class-token slot."""

    ids: list[int]
    vocab_size: int

    def __post_init__(self) -> None:
        if len(self.ids) < 1:
            raise ShapeError("token sequence must be non-empty")
        if self.ids[0] != CLS_ID:
            raise ValueError(f"position 0 must hold the class token id {CLS_ID}, got {self.ids[0]}")
        bad = [i for i in self.ids if not 0 <= i < self.vocab_size]
        if bad:
            raise ValueError(f"token ids {bad} out of range for vocab of {self.vocab_size}")

    def __len__(self) -> int:
        return len(self.ids)


@dataclass
class LstmParams:
    """One direction of one LSTM layer.

    Gate weights are stored fused along the last axis in i|f|g|o order:
    ``w_x`` is (d_in, 4h), ``w_h`` is (h, 4h), ``b`` is (4h,).
    """

    w_x: Tensor
    w_h: Tensor
    b: Tensor
    hidden: int

    def __post_init__(self) -> None:
        h = self.hidden
        if self.w_x.shape[1] != 4 * h or self.w_h.shape != (h, 4 * h) or self.b.shape != (4 * h,):
            raise ShapeError(
                f"inconsistent LSTM gate shapes: w_x {self.w_x.shape}, w_h {self.w_h.shape}, "
                f"b {self.b.shape} for hidden size {h}"
            )

    @property
    def input_size(self) -> int:
        return self.w_x.shape[0]

    @classmethod
    def init(cls, rng: np.random.Generator, d_in: int, hidden: int) -> "LstmParams":
        bound = 1.0 / np.sqrt(d_in)
        return cls(
            w_x=Tensor(rng.uniform(-bound, bound, (d_in, 4 * hidden)), requires_grad=True),
            w_h=Tensor(rng.uniform(-bound, bound, (hidden, 4 * hidden)), requires_grad=True),
            b=Tensor(np.zeros(4 * hidden), requires_grad=True),
            hidden=hidden,
        )

    @classmethod
    def zeros(cls, d_in: int, hidden: int) -> "LstmParams":
        return cls(
            w_x=Tensor(np.zeros((d_in, 4 * hidden)), requires_grad=True),
            w_h=Tensor(np.zeros((hidden, 4 * hidden)), requires_grad=True),
            b=Tensor(np.zeros(4 * hidden), requires_grad=True),
            hidden=hidden,
        )

    def tensors(self) -> dict[str, Tensor]:
        return {"w_x": self.w_x, "w_h": self.w_h, "b": self.b}


def embed_tokens(seq: TokenSequence, table: Tensor) -> Tensor:
    """Look up one trainable embedding row per token id."""
    if table.shape[0] < seq.vocab_size:
        raise ShapeError(f"embedding table has {table.shape[0]} rows for vocab of {seq.vocab_size}")
    return tz.take_rows(table, seq.ids)


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, p: LstmParams) -> tuple[Tensor, Tensor]:
    """One LSTM step: i,f,o = sigmoid, g = tanh, c' = f*c + i*g, h' = o*tanh(c')."""
    n = p.hidden
    if x.shape != (p.input_size,) or h.shape != (n,) or c.shape != (n,):
        raise ShapeError(
            f"lstm_cell: x {x.shape}, h {h.shape}, c {c.shape} do not match params "
            f"(input {p.input_size}, hidden {n})"
        )
    gates = tz.add(tz.add(tz.vecmat(x, p.w_x), tz.vecmat(h, p.w_h)), p.b)
    i = tz.sigmoid(tz.slice_axis(gates, 0, 0, n))
    f = tz.sigmoid(tz.slice_axis(gates, 0, n, 2 * n))
    g = tz.tanh(tz.slice_axis(gates, 0, 2 * n, 3 * n))
    o = tz.sigmoid(tz.slice_axis(gates, 0, 3 * n, 4 * n))
    c_next = tz.add(tz.mul(f, c), tz.mul(i, g))
    h_next = tz.mul(o, tz.tanh(c_next))
    return h_next, c_next


def _run_direction(seq: Tensor, p: LstmParams, reverse: bool) -> list[Tensor]:
    n = seq.shape[0]
    h = Tensor(np.zeros(p.hidden))
    c = Tensor(np.zeros(p.hidden))
    order = range(n - 1, -1, -1) if reverse else range(n)
    outputs: list[Tensor] = [None] * n  # type: ignore[list-item]
    for i in order:
        x = tz.reshape(tz.slice_axis(seq, 0, i, i + 1), (seq.shape[1],))
        h, c = lstm_cell(x, h, c, p)
        outputs[i] = h
    return outputs


def bilstm_layer(seq: Tensor, p_fwd: LstmParams, p_bwd: LstmParams) -> Tensor:
    """Run both directions from zero states; row i is [fwd_h_i ; bwd_h_i]."""
    if seq.data.ndim != 2 or seq.shape[0] < 1:
        raise ShapeError(f"bilstm_layer expects a non-empty (n, d) sequence, got {seq.shape}")
    fwd = _run_direction(seq, p_fwd, reverse=False)
    bwd = _run_direction(seq, p_bwd, reverse=True)
    rows = [tz.concat([f, b], axis=0) for f, b in zip(fwd, bwd)]
    return tz.stack_rows(rows)


@dataclass
class BiLstmLayerParams:
    fwd: LstmParams
    bwd: LstmParams

    @classmethod
    def init(cls, rng: np.random.Generator, d_in: int, hidden: int) -> "BiLstmLayerParams":
        return cls(fwd=LstmParams.init(rng, d_in, hidden), bwd=LstmParams.init(rng, d_in, hidden))

    def tensors(self) -> dict[str, Tensor]:
        out = {}
        for tag, p in (("fwd", self.fwd), ("bwd", self.bwd)):
            for name, t in p.tensors().items():
                out[f"{tag}.{name}"] = t
        return out


def double_bilstm(seq: Tensor, layer1: BiLstmLayerParams, layer2: BiLstmLayerParams) -> Tensor:
    """Two stacked width-preserving BiLSTM layers; output is the text feature sequence."""
    d = seq.shape[1]
    if d % 2 != 0:
        raise ShapeError(f"double_bilstm needs an even feature width, got {d}")
    if layer1.fwd.hidden != d // 2 or layer2.fwd.hidden != d // 2:
        raise ShapeError("BiLSTM hidden size must be half the feature width to preserve it")
    return bilstm_layer(bilstm_layer(seq, layer1.fwd, layer1.bwd), layer2.fwd, layer2.bwd)
