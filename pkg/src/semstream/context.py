"""Per-chunk semantic context embeddings via attention pooling.

A single learned query cross-attends over the frame embeddings of a window
of past chunks through a stack of decoder layers (cross-attention + feed
forward, residual and layernorm around each), then a linear projection maps
the pooled vector to the teacher embedding dimension. When there is no past
(the first chunk), the projection of the bare learned query serves as a
learned "no context yet" embedding.

One context vector is computed per chunk and shared by every frame of the
chunk; attach_context concatenates it onto each frame embedding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionError, ParameterError
from .rng import CounterRng
from .tensor import (
    Tensor,
    add,
    concat,
    layer_norm,
    linear,
    masked_softmax,
    matmul,
    scale,
    swish,
    transpose,
    uniform_init,
    zeros_init,
)
from .encoder import FeedForward, _linear_params, _norm_params


@dataclass(frozen=True)
class ContextConfig:
    d_model: int = 32
    num_layers: int = 2
    teacher_dim: int = 16
    # How many past chunks feed a chunk's context; None = all past chunks.
    window_chunks: Optional[int] = None

    def __post_init__(self):
        if self.teacher_dim <= 0:
            raise ParameterError(f"teacher_dim must be positive, got {self.teacher_dim}")
        if self.num_layers < 1:
            raise ParameterError(f"num_layers must be >= 1, got {self.num_layers}")
        if self.window_chunks is not None and self.window_chunks < 1:
            raise ParameterError(
                f"window_chunks must be positive or None, got {self.window_chunks}"
            )


class _DecoderLayer:
    """Single-head cross-attention followed by a feed-forward block."""

    def __init__(self, rng, d_model, prefix, params):
        self.scale = 1.0 / np.sqrt(d_model)
        self.wq, self.bq = _linear_params(rng, d_model, d_model, f"{prefix}.q", params)
        self.wk, self.bk = _linear_params(rng, d_model, d_model, f"{prefix}.k", params)
        self.wv, self.bv = _linear_params(rng, d_model, d_model, f"{prefix}.v", params)
        self.wo, self.bo = _linear_params(rng, d_model, d_model, f"{prefix}.o", params)
        self.ffn = FeedForward(rng.derive("ffn"), d_model, 2 * d_model, f"{prefix}.ffn", params)
        self.ln_attn = _norm_params(d_model, f"{prefix}.ln_attn", params)
        self.ln_ffn = _norm_params(d_model, f"{prefix}.ln_ffn", params)

    def cross_attention(self, x: Tensor, memory: Tensor) -> Tensor:
        q = linear(x, self.wq, self.bq)
        k = linear(memory, self.wk, self.bk)
        v = linear(memory, self.wv, self.bv)
        scores = scale(matmul(q, transpose(k)), self.scale)
        probs = masked_softmax(scores, np.ones(scores.shape, dtype=np.float32))
        return linear(matmul(probs, v), self.wo, self.bo)

    def forward(self, x: Tensor, memory: Tensor) -> Tensor:
        x = add(x, self.cross_attention(layer_norm(x, *self.ln_attn), memory))
        return add(x, self.ffn(layer_norm(x, *self.ln_ffn)))


class ContextModule:
    def __init__(self, cfg: ContextConfig, rng: CounterRng):
        self.cfg = cfg
        self.params = {}
        self.query = uniform_init(rng.derive("query"), (1, cfg.d_model), cfg.d_model)
        self.params["query"] = self.query
        self.layers = [
            _DecoderLayer(rng.derive(f"layer{i}"), cfg.d_model, f"layer{i}", self.params)
            for i in range(cfg.num_layers)
        ]
        self.proj_w, self.proj_b = _linear_params(
            rng.derive("proj"), cfg.d_model, cfg.teacher_dim, "proj", self.params
        )

    def compute_context(self, past_frames: Optional[Tensor]) -> Tensor:
        """Pool past frame embeddings into one [1, teacher_dim] vector.

        ``past_frames`` holds the frames of the window's chunks stacked along
        axis 0; None or zero rows means no past (first chunk), which yields
        the projected bare query.
        """
        if past_frames is None or past_frames.shape[0] == 0:
            return linear(self.query, self.proj_w, self.proj_b)
        if past_frames.shape[1] != self.cfg.d_model:
            raise DimensionError(
                f"past frames width {past_frames.shape[1]} does not match "
                f"d_model {self.cfg.d_model}"
            )
        x = self.query
        for layer in self.layers:
            x = layer.forward(x, past_frames)
        return linear(x, self.proj_w, self.proj_b)


def attach_context(frames: Tensor, context: Tensor) -> Tensor:
    """Concatenate one chunk's context onto each of its frame embeddings.

    ``frames`` is [s, d_model], ``context`` is [1, teacher_dim]; the result is
    [s, d_model + teacher_dim] with identical trailing columns on every row.
    """
    if frames.data.ndim != 2 or context.data.ndim != 2 or context.shape[0] != 1:
        raise DimensionError(
            f"attach_context expects frames [s,d] and context [1,c]; got "
            f"{frames.shape} and {context.shape}"
        )
    ones = Tensor(np.ones((frames.shape[0], 1)), dtype=frames.data.dtype)
    return concat([frames, matmul(ones, context)], axis=-1)
