import numpy as np
import pytest

from semstream.errors import DimensionError, ParameterError
from semstream.rng import CounterRng
from semstream.tensor import (
    Tape,
    Tensor,
    add,
    backward,
    concat,
    masked_softmax,
    matmul,
    mean_all,
    mul,
    sub,
    sum_all,
)


def test_matmul_identity():
    out = matmul(Tensor([[1.0, 0.0], [0.0, 1.0]]), Tensor([[3.0, 4.0], [5.0, 6.0]]))
    assert np.allclose(out.data, [[3, 4], [5, 6]])


def test_matmul_inner_product():
    out = matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
    assert np.allclose(out.data, [[11.0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError) as err:
        matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))
    assert "(2, 3)" in str(err.value) and "(4, 2)" in str(err.value)


def test_matmul_associativity():
    rng = CounterRng(4)
    a = Tensor(rng.normal((3, 4)))
    b = Tensor(rng.normal((4, 5)))
    c = Tensor(rng.normal((5, 2)))
    left = matmul(matmul(a, b), c).data
    right = matmul(a, matmul(b, c)).data
    assert np.abs(left - right).max() < 1e-5


def test_masked_softmax_uniform():
    out = masked_softmax(Tensor([0.0, 0.0, 0.0]), np.array([1, 1, 1]))
    assert np.allclose(out.data, [1 / 3] * 3)


def test_masked_softmax_excludes_masked_position_exactly():
    out = masked_softmax(Tensor([5.0, 100.0, 5.0]), np.array([1, 0, 1]))
    assert out.data[1] == 0.0
    assert np.allclose(out.data, [0.5, 0.0, 0.5])


def test_masked_softmax_scalar_values():
    out = masked_softmax(Tensor([1.0, 2.0]), np.array([1, 1]))
    assert np.allclose(out.data, [0.26894, 0.73106], atol=1e-5)


def test_masked_softmax_rows_sum_to_one():
    rng = CounterRng(8)
    scores = Tensor(rng.normal((6, 5)))
    mask = (rng.random((6, 5)) < 0.6).astype(np.float32)
    mask[np.arange(6), np.argmax(rng.random((6, 5)), axis=1)] = 1.0
    out = masked_softmax(scores, mask)
    assert np.abs(out.data.sum(-1) - 1.0).max() < 1e-6
    assert np.all(out.data[mask == 0] == 0.0)


def test_masked_softmax_all_zero_row_rejected():
    with pytest.raises(ParameterError):
        masked_softmax(Tensor([[1.0, 2.0]]), np.array([[0, 0]]))


def test_masked_softmax_shift_invariance():
    rng = CounterRng(12)
    scores = rng.normal((4, 6))
    mask = (rng.random((4, 6)) < 0.5).astype(np.float32)
    mask[:, 0] = 1.0
    base = masked_softmax(Tensor(scores), mask).data
    shifted = masked_softmax(Tensor(scores + 7.5), mask).data
    assert np.abs(base - shifted).max() < 1e-6


def test_backward_sum_gives_ones():
    w = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    with Tape() as tape:
        loss = sum_all(w)
        grads = backward(loss, tape)
    assert np.allclose(w.grad, [1, 1, 1])
    assert np.allclose(grads[w], [1, 1, 1])


def test_backward_mean_square_quadratic():
    w = Tensor([2.0], requires_grad=True)
    with Tape() as tape:
        d = sub(w, Tensor([0.0]))
        loss = mean_all(mul(d, d))
        tape.backward(loss)
    assert np.allclose(w.grad, [4.0])


def test_backward_requires_scalar():
    w = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        out = add(w, w)
        with pytest.raises(DimensionError):
            tape.backward(out)


def test_backward_reuses_node_accumulates():
    w = Tensor([3.0], requires_grad=True)
    with Tape() as tape:
        loss = sum_all(mul(w, w))
        tape.backward(loss)
    assert np.allclose(w.grad, [6.0])


def test_gradient_shape_matches_tensor_shape():
    rng = CounterRng(5)
    a = Tensor(rng.normal((3, 4)), requires_grad=True)
    b = Tensor(rng.normal((4,)), requires_grad=True)
    with Tape() as tape:
        loss = sum_all(add(a, b))
        tape.backward(loss)
    assert a.grad.shape == a.data.shape
    assert b.grad.shape == b.data.shape


def test_forward_outputs_finite_on_finite_inputs():
    rng = CounterRng(31)
    x = Tensor(rng.normal((5, 6)))
    from semstream.tensor import glu, layer_norm, log_softmax, swish

    outs = [
        swish(x).data,
        log_softmax(x).data,
        layer_norm(x, Tensor(np.ones(6)), Tensor(np.zeros(6))).data,
        glu(Tensor(rng.normal((5, 6)))).data,
        masked_softmax(x, np.ones((5, 6), dtype=np.float32)).data,
    ]
    for out in outs:
        assert np.all(np.isfinite(out))


def test_no_tape_records_nothing():
    w = Tensor([1.0], requires_grad=True)
    out = mul(w, w)
    assert out.requires_grad
    with Tape() as tape:
        pass
    assert len(tape) == 0


def test_independent_tapes_on_threads():
    import threading

    results = {}

    def run(name, seed):
        rng = CounterRng(seed)
        w = Tensor(rng.normal((8, 8)), requires_grad=True)
        with Tape() as tape:
            loss = sum_all(mul(w, w))
            tape.backward(loss)
        results[name] = (loss.item(), w.grad.copy(), 2.0 * w.data)

    threads = [threading.Thread(target=run, args=(i, 40 + i)) for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(results) == 4
    for loss, grad, expect in results.values():
        assert np.allclose(grad, expect, atol=1e-6)


def test_concat_roundtrip_gradients():
    a = Tensor([[1.0, 2.0]], requires_grad=True)
    b = Tensor([[3.0, 4.0, 5.0]], requires_grad=True)
    w = Tensor([[1.0, 2.0, 3.0, 4.0, 5.0]])
    with Tape() as tape:
        loss = sum_all(mul(concat([a, b], axis=-1), w))
        tape.backward(loss)
    assert np.allclose(a.grad, [[1, 2]])
    assert np.allclose(b.grad, [[3, 4, 5]])
