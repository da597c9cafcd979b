import numpy as np
import pytest

from semstream.chunkmask import ChunkSpec
from semstream.context import ContextConfig, ContextModule, attach_context
from semstream.distill import LossWeights
from semstream.errors import DimensionError, ParameterError
from semstream.rng import CounterRng
from semstream.tensor import Tape, Tensor, linear

from conftest import tiny_config
from semstream.model import TransducerModel


def make_module(**overrides) -> ContextModule:
    base = dict(d_model=8, num_layers=2, teacher_dim=6)
    base.update(overrides)
    return ContextModule(ContextConfig(**base), CounterRng(4))


def test_config_validation():
    with pytest.raises(ParameterError):
        ContextConfig(teacher_dim=0)
    with pytest.raises(ParameterError):
        ContextConfig(num_layers=0)
    with pytest.raises(ParameterError):
        ContextConfig(window_chunks=0)


def test_empty_past_is_projected_query():
    mod = make_module()
    out = mod.compute_context(None)
    expect = linear(mod.query, mod.proj_w, mod.proj_b).data
    assert np.array_equal(out.data, expect)
    # zero-row tensor behaves like no past
    out2 = mod.compute_context(Tensor(np.zeros((0, 8))))
    assert np.array_equal(out2.data, expect)


def test_output_dimension_always_teacher_dim():
    rng = CounterRng(5)
    for teacher_dim in (3, 6, 9):
        mod = make_module(teacher_dim=teacher_dim)
        for rows in (0, 1, 4, 9):
            past = None if rows == 0 else Tensor(rng.normal((rows, 8)))
            out = mod.compute_context(past)
            assert out.shape == (1, teacher_dim)
            assert np.all(np.isfinite(out.data))


def test_identical_rows_collapse_first_cross_attention():
    """With identical memory rows, attention output is the value projection of
    that row regardless of the attention weights."""
    mod = make_module(num_layers=1)
    layer = mod.layers[0]
    rng = CounterRng(6)
    row = rng.normal((1, 8))
    memory = Tensor(np.repeat(row, 5, axis=0))
    q_in = Tensor(rng.normal((1, 8)))
    out = layer.cross_attention(q_in, memory).data
    v = linear(Tensor(row), layer.wv, layer.bv)
    expect = linear(v, layer.wo, layer.bo).data
    assert np.abs(out - expect).max() < 1e-5


def test_window_locality():
    """Changing frames of chunks outside the window leaves the context bit
    unchanged (the window slices them away before any computation)."""
    model = TransducerModel(tiny_config(), seed=3)
    rng = CounterRng(7)
    frames = Tensor(rng.normal((12, 8)).astype(np.float32))
    spec = ChunkSpec(chunk_frames=2, left_chunks=None, total_frames=12)
    ctxs = model.chunk_contexts(frames, spec, ctx_window=2)
    mutated = frames.data.copy()
    mutated[2:4] = 0.0  # chunk 1, outside [3, 4] for chunk 5
    ctxs2 = model.chunk_contexts(Tensor(mutated), spec, ctx_window=2)
    assert np.abs(ctxs[5].data - ctxs2[5].data).max() <= 1e-6
    # but inside the window it must matter
    mutated = frames.data.copy()
    mutated[8:10] = 0.0  # chunk 4, inside the window for chunk 5
    ctxs3 = model.chunk_contexts(Tensor(mutated), spec, ctx_window=2)
    assert np.abs(ctxs[5].data - ctxs3[5].data).max() > 1e-6


def test_attach_context_concatenation():
    out = attach_context(Tensor([[1.0, 2.0]]), Tensor([[3.0, 4.0]]))
    assert np.allclose(out.data, [[1, 2, 3, 4]])


def test_attach_context_broadcast_rows():
    rng = CounterRng(8)
    frames = Tensor(rng.normal((5, 8)))
    ctx = Tensor(rng.normal((1, 6)))
    out = attach_context(frames, ctx)
    assert out.shape == (5, 14)
    assert np.allclose(out.data[:, 8:], np.repeat(ctx.data, 5, axis=0))
    assert np.allclose(out.data[:, :8], frames.data)


def test_attach_context_published_scale_width():
    frames = Tensor(np.zeros((1, 512), dtype=np.float32))
    ctx = Tensor(np.zeros((1, 768), dtype=np.float32))
    assert attach_context(frames, ctx).shape == (1, 1280)


def test_attach_context_shape_errors():
    with pytest.raises(DimensionError):
        attach_context(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 4))))


def test_distillation_gradient_reaches_encoder():
    model = TransducerModel(tiny_config(), seed=3)
    rng = CounterRng(9)
    feats = rng.normal((24, 4)).astype(np.float32)
    teacher = rng.normal((6,)).astype(np.float32)
    spec = ChunkSpec(chunk_frames=2, left_chunks=None, total_frames=6)
    with Tape() as tape:
        losses = model.training_losses(
            feats, [1, 2], teacher, spec, LossWeights(0.2, 0.0)
        )
        tape.backward(losses["mse"])
    touched = [
        name
        for name, p in model.params.items()
        if name.startswith("encoder.") and p.grad is not None and np.abs(p.grad).max() > 0
    ]
    assert touched, "distillation loss must backpropagate into the encoder"
