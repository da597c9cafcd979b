"""Dense float tensors with reverse-mode differentiation.

Array storage and arithmetic are numpy (float32 by default; float64 is used
by the gradient-check harness). Differentiation is a tape: every operation
executed while a :class:`Tape` is active appends one record, and
``Tape.backward`` replays the records in exact reverse execution order,
accumulating gradients keyed by tensor identity. With no active tape, ops run
in plain inference mode and record nothing.

Tensors are immutable after creation. A tape is single-owner: the active-tape
stack is thread-local, so independent tapes may run on separate threads.
"""

from __future__ import annotations

import math
import threading
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, ParameterError

DEFAULT_DTYPE = np.float32

# Additive mask constant: large enough that exp() underflows to zero after
# the row-max shift, small enough to stay finite in float32.
NEG_MASK = 1e9

_tls = threading.local()


def _stack() -> list:
    s = getattr(_tls, "stack", None)
    if s is None:
        s = []
        _tls.stack = s
    return s


def active_tape():
    s = _stack()
    return s[-1] if s else None


class Tensor:
    """Row-major float array; ``requires_grad`` marks it for backprop."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name=None):
        self.data = np.asarray(data, dtype=dtype or DEFAULT_DTYPE)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        tag = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag})"

    # Operator sugar; all routing through the module-level ops below.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _result(data: np.ndarray, inputs: Sequence[Tensor]) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = any(t.requires_grad for t in inputs)
    out.grad = None
    out.name = None
    return out


def record_op(out: Tensor, inputs: Sequence[Tensor], vjp: Callable) -> Tensor:
    """Attach ``out`` to the active tape.

    ``vjp(grad_out)`` must return one gradient array (or None) per input, each
    matching that input's shape. Exposed so modules can define fused ops (the
    lattice loss) without touching tape internals.
    """
    tape = active_tape()
    if tape is not None and out.requires_grad:
        tape._records.append((out, tuple(inputs), vjp))
    return out


class Tape:
    """Ordered record of executed operations; context manager activates it."""

    def __init__(self):
        self._records = []

    def __enter__(self):
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _stack().pop()
        assert popped is self, "tapes must unwind in LIFO order"
        return False

    def __len__(self):
        return len(self._records)

    def backward(self, loss: Tensor) -> dict:
        """Populate ``grad`` on every requires_grad tensor reaching ``loss``.

        Returns a mapping of tensor -> gradient array (identity-keyed).
        Gradients always have the shape of the tensor they belong to.
        """
        if loss.data.size != 1:
            raise DimensionError(
                f"backward expects a scalar loss, got shape {loss.shape}"
            )
        accum = {id(loss): np.ones_like(loss.data)}
        holders = {id(loss): loss}
        for out, inputs, vjp in reversed(self._records):
            g_out = accum.get(id(out))
            if g_out is None:
                continue
            grads_in = vjp(g_out)
            for inp, g in zip(inputs, grads_in):
                # Tensors that do not require grad can never relay further
                # (ops whose inputs are all constants are never recorded).
                if g is None or not inp.requires_grad:
                    continue
                if g.shape != inp.data.shape:
                    raise DimensionError(
                        f"gradient shape {g.shape} does not match tensor shape "
                        f"{inp.data.shape}"
                    )
                prev = accum.get(id(inp))
                accum[id(inp)] = g if prev is None else prev + g
                holders[id(inp)] = inp
        grad_map = {}
        for tid, t in holders.items():
            if t.requires_grad:
                g = accum[tid]
                t.grad = g if t.grad is None else t.grad + g
                grad_map[t] = g
        return grad_map


def backward(loss: Tensor, tape: Tape) -> dict:
    return tape.backward(loss)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise / structural ops
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = _result(a.data + b.data, (a, b))

    def vjp(g):
        return (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape))

    return record_op(out, (a, b), vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = _result(a.data - b.data, (a, b))

    def vjp(g):
        return (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape))

    return record_op(out, (a, b), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = _result(a.data * b.data, (a, b))

    def vjp(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return record_op(out, (a, b), vjp)


def scale(a: Tensor, c: float) -> Tensor:
    out = _result(a.data * c, (a,))
    return record_op(out, (a,), lambda g: (g * c,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(
            f"matmul requires (m,k) x (k,n); got {a.shape} x {b.shape}"
        )
    out = _result(a.data @ b.data, (a, b))

    def vjp(g):
        return (g @ b.data.T, a.data.T @ g)

    return record_op(out, (a, b), vjp)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got shape {a.shape}")
    out = _result(np.ascontiguousarray(a.data.T), (a,))
    return record_op(out, (a,), lambda g: (np.ascontiguousarray(g.T),))


def reshape(a: Tensor, shape) -> Tensor:
    out = _result(a.data.reshape(shape), (a,))
    return record_op(out, (a,), lambda g: (g.reshape(a.data.shape),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = list(tensors)
    out = _result(np.concatenate([t.data for t in parts], axis=axis), parts)
    sizes = [t.data.shape[axis] for t in parts]
    offsets = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, offsets, axis=axis))

    return record_op(out, parts, vjp)


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    out = _result(a.data[start:stop].copy(), (a,))

    def vjp(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        return (full,)

    return record_op(out, (a,), vjp)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    out = _result(np.ascontiguousarray(a.data[..., start:stop]), (a,))

    def vjp(g):
        full = np.zeros_like(a.data)
        full[..., start:stop] = g
        return (full,)

    return record_op(out, (a,), vjp)


def sum_all(a: Tensor) -> Tensor:
    out = _result(a.data.sum(dtype=a.data.dtype).reshape(()), (a,))
    return record_op(out, (a,), lambda g: (np.broadcast_to(g, a.data.shape).copy(),))


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    out = _result((a.data.sum(dtype=a.data.dtype) / n).reshape(()), (a,))
    return record_op(
        out, (a,), lambda g: (np.broadcast_to(g / n, a.data.shape).astype(a.data.dtype),)
    )


# ---------------------------------------------------------------------------
# activations and normalization
# ---------------------------------------------------------------------------


def sigmoid(a: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-a.data))
    out = _result(s, (a,))
    return record_op(out, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    out = _result(t, (a,))
    return record_op(out, (a,), lambda g: (g * (1.0 - t * t),))


def swish(a: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-a.data))
    out = _result(a.data * s, (a,))
    return record_op(out, (a,), lambda g: (g * s * (1.0 + a.data * (1.0 - s)),))


def glu(a: Tensor) -> Tensor:
    """Gated linear unit over the last axis: split in half, left * sigmoid(right)."""
    d = a.data.shape[-1]
    if d % 2 != 0:
        raise DimensionError(f"glu needs an even last axis, got {d}")
    h = d // 2
    lhs = a.data[..., :h]
    s = 1.0 / (1.0 + np.exp(-a.data[..., h:]))
    out = _result(lhs * s, (a,))

    def vjp(g):
        full = np.empty_like(a.data)
        full[..., :h] = g * s
        full[..., h:] = g * lhs * s * (1.0 - s)
        return (full,)

    return record_op(out, (a,), vjp)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    if gain.data.shape != x.data.shape[-1:] or bias.data.shape != x.data.shape[-1:]:
        raise DimensionError(
            f"layer_norm gain/bias {gain.shape}/{bias.shape} do not match "
            f"features {x.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = xc * inv
    out = _result(y * gain.data + bias.data, (x, gain, bias))

    def vjp(g):
        lead = tuple(range(g.ndim - 1))
        dgain = (g * y).sum(axis=lead)
        dbias = g.sum(axis=lead)
        dy = g * gain.data
        dx = inv * (
            dy
            - dy.mean(axis=-1, keepdims=True)
            - y * (dy * y).mean(axis=-1, keepdims=True)
        )
        return (dx, dgain, dbias)

    return record_op(out, (x, gain, bias), vjp)


def log_softmax(a: Tensor) -> Tensor:
    """Log-probabilities over the last axis (max-shifted for stability)."""
    mx = a.data.max(axis=-1, keepdims=True)
    shifted = a.data - mx
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True)) + mx
    out_data = a.data - lse
    out = _result(out_data, (a,))
    p = np.exp(out_data)

    def vjp(g):
        return (g - p * g.sum(axis=-1, keepdims=True),)

    return record_op(out, (a,), vjp)


def masked_softmax(scores: Tensor, mask) -> Tensor:
    """Softmax over the last axis restricted to positions where mask == 1.

    The mask is a constant (no gradient) 0/1 array broadcastable to
    ``scores``; masked-out positions receive exactly zero probability and the
    remaining positions sum to one. Masking adds -NEG_MASK before the softmax
    and the outputs are re-zeroed afterwards so the zero is exact.
    """
    m = np.asarray(mask, dtype=scores.data.dtype)
    m = np.broadcast_to(m, scores.data.shape)
    if np.any(m.sum(axis=-1) == 0):
        raise ParameterError("mask row with no attendable position")
    shifted = scores.data + (m - 1.0) * NEG_MASK
    shifted = shifted - shifted.max(axis=-1, keepdims=True)
    e = np.exp(shifted) * m
    p = e / e.sum(axis=-1, keepdims=True)
    out = _result(p, (scores,))

    def vjp(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return record_op(out, (scores,), vjp)


# ---------------------------------------------------------------------------
# convolutions and lookups
# ---------------------------------------------------------------------------


def depthwise_conv1d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Causal depthwise convolution along axis 0; output length equals input.

    ``x`` is [T, C], ``w`` is [K, C] (one filter per channel), ``b`` is [C].
    The input is left-padded with K-1 zeros so frame t only sees t-K+1..t.
    """
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[1]:
        raise DimensionError(
            f"depthwise_conv1d needs x[T,C] and w[K,C]; got {x.shape}, {w.shape}"
        )
    t_len, channels = x.data.shape
    k = w.data.shape[0]
    xp = np.zeros((t_len + k - 1, channels), dtype=x.data.dtype)
    xp[k - 1 :] = x.data
    out_data = np.zeros_like(x.data)
    for j in range(k):
        out_data += xp[j : j + t_len] * w.data[j]
    out_data = out_data + b.data
    out = _result(out_data, (x, w, b))

    def vjp(g):
        dxp = np.zeros_like(xp)
        dw = np.zeros_like(w.data)
        for j in range(k):
            dxp[j : j + t_len] += g * w.data[j]
            dw[j] = (xp[j : j + t_len] * g).sum(axis=0)
        return (dxp[k - 1 :], dw, g.sum(axis=0))

    return record_op(out, (x, w, b), vjp)


def strided_conv1d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Kernel-2 stride-2 convolution along axis 0; halves the frame count.

    ``x`` is [T, Cin], ``w`` is [2, Cin, Cout], ``b`` is [Cout]. Odd-length
    inputs are zero-padded on the right, so the output has ceil(T/2) rows.
    """
    if (
        x.data.ndim != 2
        or w.data.ndim != 3
        or w.data.shape[0] != 2
        or x.data.shape[1] != w.data.shape[1]
    ):
        raise DimensionError(
            f"strided_conv1d needs x[T,Cin] and w[2,Cin,Cout]; got {x.shape}, {w.shape}"
        )
    t_len = x.data.shape[0]
    t_out = (t_len + 1) // 2
    xp = x.data
    if t_len % 2 == 1:
        xp = np.concatenate([x.data, np.zeros((1, x.data.shape[1]), x.data.dtype)])
    even, odd = xp[0::2], xp[1::2]
    out_data = even @ w.data[0] + odd @ w.data[1] + b.data
    out = _result(out_data, (x, w, b))

    def vjp(g):
        dxp = np.zeros_like(xp)
        dxp[0::2] = g @ w.data[0].T
        dxp[1::2] = g @ w.data[1].T
        dw = np.stack([even.T @ g, odd.T @ g])
        return (dxp[:t_len], dw, g.sum(axis=0))

    assert out.data.shape[0] == t_out
    return record_op(out, (x, w, b), vjp)


def embedding(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Row lookup: returns [len(ids), D] rows of ``table``."""
    idx = list(ids)
    n = table.data.shape[0]
    for i in idx:
        if not 0 <= i < n:
            raise ParameterError(f"embedding index {i} out of range [0, {n})")
    out = _result(table.data[idx], (table,))

    def vjp(g):
        dt = np.zeros_like(table.data)
        np.add.at(dt, idx, g)
        return (dt,)

    return record_op(out, (table,), vjp)


# ---------------------------------------------------------------------------
# parameter initialization
# ---------------------------------------------------------------------------


def uniform_init(rng, shape, fan_in: int, dtype=None) -> Tensor:
    """Weights uniform in +-sqrt(1/fan_in); the default for all linear maps."""
    bound = math.sqrt(1.0 / fan_in)
    data = rng.uniform(-bound, bound, shape)
    return Tensor(data, requires_grad=True, dtype=dtype)


def zeros_init(shape, dtype=None) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True, dtype=dtype)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return add(matmul(x, w), b)
