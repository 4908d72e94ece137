"""Dense float64 tensors with reverse-mode automatic differentiation.

Values live in row-major numpy arrays. Every differentiable operation
records its differentiable inputs and a backward closure, so that
``Tensor.backward()`` can push gradients to the leaves by walking the
graph in reverse topological order. Slices and concatenations copy
(no strided views), and elementwise binaries broadcast against scalars
only; anything wider goes through an explicit named op so every
gradient rule stays visible.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class DomainError(ValueError):
    """Operand values lie outside the operation's domain."""


class GraphError(RuntimeError):
    """Backward pass requested on an unusable graph."""


# GELU tanh approximation constants, fixed so results are reproducible.
GELU_COEFF = 0.044715
_GELU_SCALE = math.sqrt(2.0 / math.pi)

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (pure inference)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A dense float64 array plus an optional gradient and graph link."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad: bool = False):
        # asarray with order="C" keeps 0-d scalars 0-d (ascontiguousarray would not)
        self.data = np.asarray(data, dtype=np.float64, order="C")
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._consumed = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """A constant copy cut off from the graph."""
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every requires-grad leaf.

        ``self`` must be a scalar produced by a recorded graph; gradients
        from shared subexpressions add up. A graph can be walked once;
        rebuild the forward pass before calling backward again.
        """
        if self.data.size != 1:
            raise GraphError(f"backward needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise GraphError("backward on a tensor with no recorded graph")
        if self._consumed:
            raise GraphError("graph already consumed; rerun the forward pass first")
        self._consumed = True

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Arithmetic sugar; floats lift to constant scalars.
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)  # copy: g may be shared
    else:
        t.grad += g


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Collapse a gradient onto a scalar operand's shape."""
    if g.shape == shape:
        return g
    return np.asarray(g.sum(), dtype=np.float64).reshape(shape)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled:
        diff_parents = tuple(p for p in parents if p.requires_grad)
        if diff_parents:
            out.requires_grad = True
            out._parents = diff_parents
            out._backward = backward
    return out


# ---------------------------------------------------------------------------
# core binary / unary elementwise ops


def _binary_shapes(a: Tensor, b: Tensor, name: str) -> None:
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise ShapeError(f"{name}: shapes {a.shape} and {b.shape} neither match nor broadcast a scalar")


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    _binary_shapes(a, b, "add")

    def backward(g):
        _accum(a, _reduce_to(g, a.shape))
        _accum(b, _reduce_to(g, b.shape))

    return _make(a.data + b.data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    _binary_shapes(a, b, "sub")

    def backward(g):
        _accum(a, _reduce_to(g, a.shape))
        _accum(b, _reduce_to(-g, b.shape))

    return _make(a.data - b.data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    _binary_shapes(a, b, "mul")

    def backward(g):
        _accum(a, _reduce_to(g * b.data, a.shape))
        _accum(b, _reduce_to(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), backward)


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)

    def backward(g):
        _accum(x, g * c)

    return _make(x.data * c, (x,), backward)


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x: Tensor) -> Tensor:
    y = _stable_sigmoid(x.data)

    def backward(g):
        _accum(x, g * y * (1.0 - y))

    return _make(y, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def backward(g):
        _accum(x, g * (1.0 - y * y))

    return _make(y, (x,), backward)


def relu(x: Tensor) -> Tensor:
    y = np.maximum(x.data, 0.0)

    def backward(g):
        _accum(x, g * (x.data > 0.0))

    return _make(y, (x,), backward)


def gelu(x: Tensor) -> Tensor:
    """GELU via the tanh approximation 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3)))."""
    v = x.data
    inner = _GELU_SCALE * (v + GELU_COEFF * v ** 3)
    t = np.tanh(inner)
    y = 0.5 * v * (1.0 + t)

    def backward(g):
        d_inner = _GELU_SCALE * (1.0 + 3.0 * GELU_COEFF * v ** 2)
        local = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * d_inner
        _accum(x, g * local)

    return _make(y, (x,), backward)


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)

    def backward(g):
        _accum(x, g * y)

    return _make(y, (x,), backward)


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0.0):
        raise DomainError("log requires strictly positive input")
    y = np.log(x.data)

    def backward(g):
        _accum(x, g / x.data)

    return _make(y, (x,), backward)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _make(a.data @ b.data, (a, b), backward)


def vecmat(v: Tensor, m: Tensor) -> Tensor:
    """Row-vector times matrix: (q,) @ (q, r) -> (r,)."""
    if v.data.ndim != 1 or m.data.ndim != 2 or v.shape[0] != m.shape[0]:
        raise ShapeError(f"vecmat: incompatible shapes {v.shape} and {m.shape}")

    def backward(g):
        _accum(v, m.data @ g)
        _accum(m, np.outer(v.data, g))

    return _make(v.data @ m.data, (v, m), backward)


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {x.shape}")

    def backward(g):
        _accum(x, g.T)

    return _make(x.data.T.copy(), (x,), backward)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != x.size:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}")

    def backward(g):
        _accum(x, g.reshape(x.shape))

    return _make(x.data.reshape(shape).copy(), (x,), backward)


# ---------------------------------------------------------------------------
# reductions, softmax, normalization


def _check_axis(x: Tensor, axis: int, name: str) -> int:
    nd = x.data.ndim
    if not -nd <= axis < nd:
        raise ShapeError(f"{name}: axis {axis} invalid for shape {x.shape}")
    return axis % nd


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis = _check_axis(x, axis, "softmax")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        _accum(x, y * (g - dot))

    return _make(y, (x,), backward)


def reduce(x: Tensor, axis: int, kind: str) -> Tensor:
    """Remove ``axis`` by taking the mean or the max along it.

    Max routes its gradient to a single element per slice; ties go to
    the lowest index.
    """
    axis = _check_axis(x, axis, "reduce")
    if kind == "mean":
        n = x.shape[axis]
        y = x.data.mean(axis=axis)

        def backward(g):
            _accum(x, np.broadcast_to(np.expand_dims(g, axis) / n, x.shape))

        return _make(y, (x,), backward)
    if kind == "max":
        y = x.data.max(axis=axis)
        idx = np.expand_dims(x.data.argmax(axis=axis), axis)

        def backward(g):
            buf = np.zeros_like(x.data)
            np.put_along_axis(buf, idx, np.expand_dims(g, axis), axis)
            _accum(x, buf)

        return _make(y, (x,), backward)
    raise ValueError(f"reduce kind must be 'mean' or 'max', got {kind!r}")


def sum_all(x: Tensor) -> Tensor:
    def backward(g):
        _accum(x, np.broadcast_to(g, x.shape))

    return _make(np.asarray(x.data.sum()), (x,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm: gain/bias must be ({d},), got {gain.shape} and {bias.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    y = xhat * gain.data + bias.data

    def backward(g):
        _accum(gain, (g * xhat).reshape(-1, d).sum(axis=0))
        _accum(bias, g.reshape(-1, d).sum(axis=0))
        dxhat = g * gain.data
        term = dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        _accum(x, term * inv)

    return _make(y, (x, gain, bias), backward)


# ---------------------------------------------------------------------------
# structural ops (copy semantics, no views)


def concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    if len(parts) == 0:
        raise ShapeError("concat of an empty part list")
    axis = _check_axis(parts[0], axis, "concat")
    ref = list(parts[0].shape)
    for p in parts[1:]:
        other = list(p.shape)
        if len(other) != len(ref) or any(o != r for i, (o, r) in enumerate(zip(other, ref)) if i != axis):
            raise ShapeError(f"concat: extent mismatch between {parts[0].shape} and {p.shape} off axis {axis}")
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accum(p, g[tuple(sl)])

    return _make(np.concatenate([p.data for p in parts], axis=axis), parts, backward)


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    axis = _check_axis(x, axis, "slice")
    if not 0 <= start < stop <= x.shape[axis]:
        raise ShapeError(f"slice: range [{start}, {stop}) invalid for extent {x.shape[axis]}")
    sl = [slice(None)] * x.data.ndim
    sl[axis] = slice(start, stop)
    sl = tuple(sl)

    def backward(g):
        buf = np.zeros_like(x.data)
        buf[sl] = g
        _accum(x, buf)

    return _make(x.data[sl].copy(), (x,), backward)


def take_rows(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Gather rows of a matrix; gradients scatter-add back into the table."""
    if table.data.ndim != 2:
        raise ShapeError(f"take_rows expects a matrix, got shape {table.shape}")
    idx = np.asarray(list(ids), dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise ShapeError("take_rows needs a non-empty 1-d id list")
    if idx.min() < 0 or idx.max() >= table.shape[0]:
        raise DomainError(f"take_rows: id out of range for table with {table.shape[0]} rows")

    def backward(g):
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, idx, g)

    return _make(table.data[idx].copy(), (table,), backward)


def stack_rows(vectors: Sequence[Tensor]) -> Tensor:
    """Stack 1-d tensors of equal length into a matrix."""
    return concat([reshape(v, (1, v.size)) for v in vectors], axis=0)


# explicit vector-against-matrix ops; binary elementwise stays scalar-only


def add_rowvec(x: Tensor, v: Tensor) -> Tensor:
    """Add a length-d vector to every row of an (n, d) matrix."""
    if x.data.ndim != 2 or v.shape != (x.shape[1],):
        raise ShapeError(f"add_rowvec: shapes {x.shape} and {v.shape} do not align")

    def backward(g):
        _accum(x, g)
        _accum(v, g.sum(axis=0))

    return _make(x.data + v.data, (x, v), backward)


def scale_rows(x: Tensor, s: Tensor) -> Tensor:
    """Multiply row l of an (n, d) matrix by s[l]."""
    if x.data.ndim != 2 or s.shape != (x.shape[0],):
        raise ShapeError(f"scale_rows: shapes {x.shape} and {s.shape} do not align")

    def backward(g):
        _accum(x, g * s.data[:, None])
        _accum(s, (g * x.data).sum(axis=1))

    return _make(x.data * s.data[:, None], (x, s), backward)


def scale_cols(x: Tensor, w: Tensor) -> Tensor:
    """Multiply column c of an (n, d) matrix by w[c]."""
    if x.data.ndim != 2 or w.shape != (x.shape[1],):
        raise ShapeError(f"scale_cols: shapes {x.shape} and {w.shape} do not align")

    def backward(g):
        _accum(x, g * w.data[None, :])
        _accum(w, (g * x.data).sum(axis=0))

    return _make(x.data * w.data[None, :], (x, w), backward)


# ---------------------------------------------------------------------------
# 1-d convolution over a token sequence


def conv1d(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Cross-correlate an (L, C_in) sequence with (K, C_in, C_out) taps.

    K must be odd; zero padding keeps the output length at L.
    """
    if x.data.ndim != 2 or kernels.data.ndim != 3 or bias.data.ndim != 1:
        raise ShapeError(
            f"conv1d: expected (L,Cin), (K,Cin,Cout), (Cout,), got {x.shape}, {kernels.shape}, {bias.shape}"
        )
    length, c_in = x.shape
    k, kc_in, c_out = kernels.shape
    if k % 2 == 0:
        raise ShapeError(f"conv1d: kernel width must be odd, got {k}")
    if kc_in != c_in or bias.shape[0] != c_out:
        raise ShapeError(
            f"conv1d: channel mismatch between input {x.shape}, kernels {kernels.shape}, bias {bias.shape}"
        )
    pad = k // 2
    xp = np.zeros((length + k - 1, c_in))
    xp[pad:pad + length] = x.data
    out = np.tile(bias.data, (length, 1))
    for j in range(k):
        out += xp[j:j + length] @ kernels.data[j]

    def backward(g):
        _accum(bias, g.sum(axis=0))
        if kernels.requires_grad:
            gk = np.empty_like(kernels.data)
            for j in range(k):
                gk[j] = xp[j:j + length].T @ g
            _accum(kernels, gk)
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[j:j + length] += g @ kernels.data[j].T
            _accum(x, gxp[pad:pad + length])

    return _make(out, (x, kernels, bias), backward)


# ---------------------------------------------------------------------------
# finite-difference gradient checking


@dataclass
class GradReport:
    """Extrema of |autodiff - central difference| over the probed coordinates."""

    max_abs_err: float
    max_rel_err: float
    probed_count: int


def _rel_err(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1e-8)


def grad_check(
    f: Callable[..., Tensor],
    leaves: Sequence[Tensor],
    eps: float = 1e-5,
    max_probes: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradReport:
    """Compare autodiff gradients of a scalar ``f(*leaves)`` against central differences.

    Probes every coordinate of every leaf unless ``max_probes`` caps the
    count (then a seeded generator picks the sample).
    """
    if not 0.0 < eps <= 1e-2:
        raise ValueError(f"grad_check: eps must lie in (0, 1e-2], got {eps}")
    for leaf in leaves:
        leaf.zero_grad()
    out = f(*leaves)
    if out.data.size != 1:
        raise ShapeError(f"grad_check: f must return a scalar, got shape {out.shape}")
    out.backward()
    analytic = [np.zeros_like(l.data) if l.grad is None else l.grad.copy() for l in leaves]

    coords = [(i, j) for i, leaf in enumerate(leaves) for j in range(leaf.size)]
    if max_probes is not None and max_probes < len(coords):
        rng = rng or np.random.default_rng(0)
        picked = rng.choice(len(coords), size=max_probes, replace=False)
        coords = [coords[int(p)] for p in picked]

    max_abs = 0.0
    max_rel = 0.0
    with no_grad():
        for i, j in coords:
            flat = leaves[i].data.reshape(-1)
            orig = flat[j]
            flat[j] = orig + eps
            f_plus = f(*leaves).item()
            flat[j] = orig - eps
            f_minus = f(*leaves).item()
            flat[j] = orig
            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                raise DomainError(f"grad_check: non-finite f at probe (leaf {i}, coord {j})")
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = float(analytic[i].reshape(-1)[j])
            max_abs = max(max_abs, abs(a - numeric))
            max_rel = max(max_rel, _rel_err(a, numeric))
    return GradReport(max_abs_err=max_abs, max_rel_err=max_rel, probed_count=len(coords))
