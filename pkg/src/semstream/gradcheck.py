"""Central finite-difference gradient checking.

The numeric side always evaluates the function at float64 so the oracle's own
noise never dominates; the analytic side runs at the precision under test
(float32 by default, float64 for the tight-tolerance mode). The reported
error is the max absolute discrepancy normalized by the largest gradient
magnitude across the checked tensors:

    err = max |analytic - numeric| / max(|analytic|_inf, |numeric|_inf, 1e-8)

which behaves like a plain relative error whenever gradients are O(1) and
stays finite when some coordinates vanish.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tape, Tensor

DEFAULT_STEP_F32 = 1e-3
DEFAULT_STEP_F64 = 1e-5


@dataclass
class GradCheckResult:
    name: str
    value: float
    max_rel_err: float
    per_tensor: list = field(default_factory=list)  # (index, err) pairs

    @property
    def ok(self) -> bool:
        return np.isfinite(self.max_rel_err)


def analytic_gradients(fn: Callable, inputs: Sequence[Tensor], dtype):
    """Run fn under a fresh tape at ``dtype``; returns (value, grads)."""
    ts = [Tensor(t.data, requires_grad=True, dtype=dtype) for t in inputs]
    with Tape() as tape:
        loss = fn(ts)
        tape.backward(loss)
    grads = [
        t.grad if t.grad is not None else np.zeros_like(t.data, dtype=dtype) for t in ts
    ]
    return loss.item(), grads


def numeric_gradient_at(
    fn: Callable,
    inputs: Sequence[Tensor],
    tensor_index: int,
    flat_index: int,
    step: float,
) -> float:
    """Central difference for one coordinate, evaluated at float64."""
    base = [t.data.astype(np.float64) for t in inputs]

    def eval_with(delta: float) -> float:
        datas = [d.copy() for d in base]
        flat = datas[tensor_index].reshape(-1)
        flat[flat_index] += delta
        ts = [Tensor(d, requires_grad=False, dtype=np.float64) for d in datas]
        return fn(ts).item()

    return (eval_with(step) - eval_with(-step)) / (2.0 * step)


def check_gradients(
    fn: Callable,
    inputs: Sequence[Tensor],
    step: float = DEFAULT_STEP_F32,
    dtype=np.float32,
    coords: Optional[Sequence[tuple]] = None,
    name: str = "",
) -> GradCheckResult:
    """Compare analytic gradients of ``fn`` against central differences.

    ``coords`` optionally restricts the numeric side to a sample of
    (tensor_index, flat_index) coordinates; by default every coordinate of
    every input is checked.
    """
    value, analytic = analytic_gradients(fn, inputs, dtype)
    if coords is None:
        coords = [
            (i, j) for i, t in enumerate(inputs) for j in range(t.data.size)
        ]
    scale = max((float(np.max(np.abs(g))) for g in analytic), default=0.0)
    max_abs = 0.0
    per_tensor = {}
    for ti, fi in coords:
        n = numeric_gradient_at(fn, inputs, ti, fi, step)
        a = float(analytic[ti].reshape(-1)[fi])
        scale = max(scale, abs(n))
        diff = abs(a - n)
        max_abs = max(max_abs, diff)
        per_tensor[ti] = max(per_tensor.get(ti, 0.0), diff)
    denom = max(scale, 1e-8)
    return GradCheckResult(
        name=name,
        value=value,
        max_rel_err=max_abs / denom,
        per_tensor=sorted((ti, err / denom) for ti, err in per_tensor.items()),
    )


def standard_op_checks(rng) -> list:
    """One (name, fn, inputs) case per differentiable operation.

    Each fn reduces the op output to a scalar via a fixed random weighting so
    every output coordinate contributes to the gradient. Call repeatedly with
    fresh rng state for independent random instances.
    """
    from . import tensor as T
    from .transducer import rnnt_loss

    def t(shape):
        return Tensor(rng.normal(shape))

    def reduce_with(w):
        return lambda out: T.sum_all(T.mul(out, w))

    cases = []

    def case(name, fn, inputs):
        cases.append((name, fn, inputs))

    w34 = Tensor(rng.normal((3, 4)))
    case("add", lambda ts: T.sum_all(T.mul(T.add(ts[0], ts[1]), w34)), [t((3, 4)), t((4,))])
    case("sub", lambda ts: T.sum_all(T.mul(T.sub(ts[0], ts[1]), w34)), [t((3, 4)), t((3, 4))])
    case("mul", lambda ts: T.sum_all(T.mul(T.mul(ts[0], ts[1]), w34)), [t((3, 4)), t((1, 4))])
    case("scale", lambda ts: T.sum_all(T.mul(T.scale(ts[0], 1.7), w34)), [t((3, 4))])
    w43 = Tensor(rng.normal((4, 3)))
    case("matmul", lambda ts: T.sum_all(T.mul(T.matmul(ts[0], ts[1]), w43)), [t((4, 5)), t((5, 3))])
    case("transpose", lambda ts: T.sum_all(T.mul(T.transpose(ts[0]), w43)), [t((3, 4))])
    w26 = Tensor(rng.normal((2, 6)))
    case("reshape", lambda ts: T.sum_all(T.mul(T.reshape(ts[0], (2, 6)), w26)), [t((3, 4))])
    w38 = Tensor(rng.normal((3, 8)))
    case(
        "concat",
        lambda ts: T.sum_all(T.mul(T.concat([ts[0], ts[1]], axis=-1), w38)),
        [t((3, 4)), t((3, 4))],
    )
    w24 = Tensor(rng.normal((2, 4)))
    case("slice_rows", lambda ts: T.sum_all(T.mul(T.slice_rows(ts[0], 1, 3), w24)), [t((4, 4))])
    w32 = Tensor(rng.normal((3, 2)))
    case("slice_cols", lambda ts: T.sum_all(T.mul(T.slice_cols(ts[0], 1, 3), w32)), [t((3, 4))])
    case("sum_all", lambda ts: T.sum_all(ts[0]), [t((3, 4))])
    case("mean_all", lambda ts: T.scale(T.mean_all(ts[0]), 2.5), [t((3, 4))])
    case("sigmoid", lambda ts: T.sum_all(T.mul(T.sigmoid(ts[0]), w34)), [t((3, 4))])
    case("tanh", lambda ts: T.sum_all(T.mul(T.tanh(ts[0]), w34)), [t((3, 4))])
    case("swish", lambda ts: T.sum_all(T.mul(T.swish(ts[0]), w34)), [t((3, 4))])
    case("glu", lambda ts: T.sum_all(T.mul(T.glu(ts[0]), w34)), [t((3, 8))])
    case(
        "layer_norm",
        lambda ts: T.sum_all(T.mul(T.layer_norm(ts[0], ts[1], ts[2]), w34)),
        [t((3, 4)), t((4,)), t((4,))],
    )
    case("log_softmax", lambda ts: T.sum_all(T.mul(T.log_softmax(ts[0]), w34)), [t((3, 4))])
    mask = np.ones((3, 4), dtype=np.float32)
    for row in mask:
        row[int(rng.randint(0, 4))] = 0.0
    case(
        "masked_softmax",
        lambda ts: T.sum_all(T.mul(T.masked_softmax(ts[0], mask), w34)),
        [t((3, 4))],
    )
    w63 = Tensor(rng.normal((6, 3)))
    case(
        "depthwise_conv1d",
        lambda ts: T.sum_all(T.mul(T.depthwise_conv1d(ts[0], ts[1], ts[2]), w63)),
        [t((6, 3)), t((5, 3)), t((3,))],
    )
    odd = 7 if rng.random() < 0.5 else 8
    wsc = Tensor(rng.normal(((odd + 1) // 2, 4)))
    case(
        "strided_conv1d",
        lambda ts: T.sum_all(T.mul(T.strided_conv1d(ts[0], ts[1], ts[2]), wsc)),
        [t((odd, 3)), t((2, 3, 4)), t((4,))],
    )
    ids = [int(rng.randint(0, 5)) for _ in range(4)]
    wemb = Tensor(rng.normal((4, 3)))
    case(
        "embedding",
        lambda ts: T.sum_all(T.mul(T.embedding(ts[0], ids), wemb)),
        [t((5, 3))],
    )
    case(
        "linear",
        lambda ts: T.sum_all(T.mul(T.linear(ts[0], ts[1], ts[2]), w43)),
        [t((4, 5)), t((5, 3)), t((3,))],
    )
    targets = [1 + int(rng.randint(0, 3)) for _ in range(2)]
    case(
        "rnnt_loss",
        lambda ts: rnnt_loss(T.log_softmax(ts[0]), targets, fastemit_lambda=0.0),
        [t((3, 3, 4))],
    )
    case(
        "rnnt_loss_fastemit",
        lambda ts: rnnt_loss(T.log_softmax(ts[0]), targets, fastemit_lambda=0.006),
        [t((3, 3, 4))],
    )
    return cases
