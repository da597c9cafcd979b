import numpy as np
import pytest

from semstream.model import ModelConfig, TransducerModel


def tiny_config(vocab_size=5, **overrides) -> ModelConfig:
    base = dict(
        vocab_size=vocab_size,
        feat_dim=4,
        d_model=8,
        num_heads=2,
        ffn_dim=12,
        encoder_layers=2,
        conv_kernel=3,
        max_frames=256,
        ctx_layers=1,
        teacher_dim=6,
        pred_dim=6,
        joint_dim=8,
    )
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture
def tiny_model() -> TransducerModel:
    return TransducerModel(tiny_config(), seed=3)


def random_log_probs(rng, t_len, u_len, vocab) -> np.ndarray:
    """A proper lattice: log-softmax over the vocabulary at every node."""
    raw = rng.normal((t_len, u_len + 1, vocab))
    return (raw - np.log(np.exp(raw).sum(-1, keepdims=True))).astype(np.float64)
