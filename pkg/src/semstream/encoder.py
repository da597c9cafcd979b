"""Convolutional frontend plus chunk-masked conformer encoder.

The frontend is two kernel-2 stride-2 convolutions (x4 frame-rate reduction,
each stage right-pads odd inputs with a zero row, so T_out = ceil(T_in / 4)),
followed by learned absolute positional embeddings. Each conformer layer is
the macaron stack half-FFN / masked self-attention / causal convolution /
half-FFN / layernorm. The convolution block is left-padded causal so the
attention mask is the only mechanism that controls context; its cross-frame
leak is bounded by the kernel's receptive field (see influence_matrix).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError
from .rng import CounterRng
from .tensor import (
    Tensor,
    add,
    concat,
    depthwise_conv1d,
    embedding,
    glu,
    layer_norm,
    linear,
    masked_softmax,
    matmul,
    scale,
    slice_cols,
    slice_rows,
    strided_conv1d,
    swish,
    transpose,
    uniform_init,
    zeros_init,
)

DOWNSAMPLE = 4


@dataclass(frozen=True)
class EncoderConfig:
    feat_dim: int = 8
    num_layers: int = 2
    d_model: int = 32
    num_heads: int = 2
    ffn_dim: int = 64
    conv_kernel: int = 7
    max_frames: int = 1024  # positional table capacity, post-frontend frames

    def __post_init__(self):
        if self.d_model % self.num_heads != 0:
            raise ParameterError(
                f"d_model {self.d_model} not divisible by num_heads {self.num_heads}"
            )
        if self.conv_kernel % 2 == 0:
            raise ParameterError(f"conv_kernel must be odd, got {self.conv_kernel}")


def downsampled_length(raw_frames: int) -> int:
    return -(-raw_frames // DOWNSAMPLE)


def _linear_params(rng, din, dout, prefix, params):
    w = uniform_init(rng, (din, dout), din)
    b = zeros_init((dout,))
    params[f"{prefix}.w"] = w
    params[f"{prefix}.b"] = b
    return w, b


def _norm_params(dim, prefix, params):
    g = Tensor(np.ones(dim), requires_grad=True)
    b = zeros_init((dim,))
    params[f"{prefix}.gain"] = g
    params[f"{prefix}.bias"] = b
    return g, b


class FeedForward:
    def __init__(self, rng, d_model, hidden, prefix, params):
        self.w1, self.b1 = _linear_params(rng, d_model, hidden, f"{prefix}.in", params)
        self.w2, self.b2 = _linear_params(rng, hidden, d_model, f"{prefix}.out", params)

    def __call__(self, x: Tensor) -> Tensor:
        return linear(swish(linear(x, self.w1, self.b1)), self.w2, self.b2)


class SelfAttention:
    def __init__(self, rng, d_model, num_heads, prefix, params):
        self.num_heads = num_heads
        self.head_dim = d_model // num_heads
        self.wq, self.bq = _linear_params(rng, d_model, d_model, f"{prefix}.q", params)
        self.wk, self.bk = _linear_params(rng, d_model, d_model, f"{prefix}.k", params)
        self.wv, self.bv = _linear_params(rng, d_model, d_model, f"{prefix}.v", params)
        self.wo, self.bo = _linear_params(rng, d_model, d_model, f"{prefix}.o", params)

    def project_kv(self, x: Tensor) -> tuple:
        return linear(x, self.wk, self.bk), linear(x, self.wv, self.bv)

    def attend(self, q_in: Tensor, keys: Tensor, values: Tensor, mask) -> Tensor:
        """Multi-head attention of ``q_in`` rows over (keys, values) rows.

        ``mask`` is a 0/1 array of shape [rows(q), rows(keys)] or None for
        unrestricted attention.
        """
        q = linear(q_in, self.wq, self.bq)
        if mask is None:
            mask = np.ones((q.shape[0], keys.shape[0]), dtype=np.float32)
        inv_sqrt = 1.0 / math.sqrt(self.head_dim)
        heads = []
        for h in range(self.num_heads):
            lo, hi = h * self.head_dim, (h + 1) * self.head_dim
            qh = slice_cols(q, lo, hi)
            kh = slice_cols(keys, lo, hi)
            vh = slice_cols(values, lo, hi)
            scores = scale(matmul(qh, transpose(kh)), inv_sqrt)
            probs = masked_softmax(scores, mask)
            heads.append(matmul(probs, vh))
        merged = heads[0] if len(heads) == 1 else concat(heads, axis=-1)
        return linear(merged, self.wo, self.bo)

    def __call__(self, x: Tensor, mask) -> Tensor:
        k, v = self.project_kv(x)
        return self.attend(x, k, v, mask)


class ConvModule:
    """Pointwise expansion, GLU, causal depthwise conv, norm, swish, pointwise."""

    def __init__(self, rng, d_model, kernel, prefix, params):
        self.kernel = kernel
        self.pw1_w, self.pw1_b = _linear_params(
            rng, d_model, 2 * d_model, f"{prefix}.pw1", params
        )
        self.dw_w = uniform_init(rng, (kernel, d_model), kernel)
        self.dw_b = zeros_init((d_model,))
        params[f"{prefix}.dw.w"] = self.dw_w
        params[f"{prefix}.dw.b"] = self.dw_b
        self.ng, self.nb = _norm_params(d_model, f"{prefix}.norm", params)
        self.pw2_w, self.pw2_b = _linear_params(
            rng, d_model, d_model, f"{prefix}.pw2", params
        )

    def pre(self, x: Tensor) -> Tensor:
        return glu(linear(x, self.pw1_w, self.pw1_b))

    def post(self, h: Tensor) -> Tensor:
        return linear(swish(layer_norm(h, self.ng, self.nb)), self.pw2_w, self.pw2_b)

    def __call__(self, x: Tensor) -> Tensor:
        return self.post(depthwise_conv1d(self.pre(x), self.dw_w, self.dw_b))

    def step(self, x: Tensor, tail: Tensor) -> tuple:
        """Streaming form: ``tail`` carries the last kernel-1 pre-conv frames.

        Returns (output chunk, new tail). Matches the offline pass exactly
        because the offline conv left-pads with zeros and the initial tail is
        zero.
        """
        h = self.pre(x)
        ext = concat([tail, h], axis=0)
        full = depthwise_conv1d(ext, self.dw_w, self.dw_b)
        k1 = self.kernel - 1
        out = slice_rows(full, k1, k1 + h.shape[0])
        new_tail = slice_rows(ext, ext.shape[0] - k1, ext.shape[0])
        return self.post(out), new_tail


class ConformerLayer:
    def __init__(self, rng, cfg: EncoderConfig, prefix, params):
        self.ffn1 = FeedForward(rng.derive("ffn1"), cfg.d_model, cfg.ffn_dim, f"{prefix}.ffn1", params)
        self.attn = SelfAttention(rng.derive("attn"), cfg.d_model, cfg.num_heads, f"{prefix}.attn", params)
        self.conv = ConvModule(rng.derive("conv"), cfg.d_model, cfg.conv_kernel, f"{prefix}.conv", params)
        self.ffn2 = FeedForward(rng.derive("ffn2"), cfg.d_model, cfg.ffn_dim, f"{prefix}.ffn2", params)
        self.ln_ffn1 = _norm_params(cfg.d_model, f"{prefix}.ln_ffn1", params)
        self.ln_attn = _norm_params(cfg.d_model, f"{prefix}.ln_attn", params)
        self.ln_conv = _norm_params(cfg.d_model, f"{prefix}.ln_conv", params)
        self.ln_ffn2 = _norm_params(cfg.d_model, f"{prefix}.ln_ffn2", params)
        self.ln_out = _norm_params(cfg.d_model, f"{prefix}.ln_out", params)

    def _macaron(self, x, ffn, ln):
        return add(x, scale(ffn(layer_norm(x, *ln)), 0.5))

    def forward(self, x: Tensor, mask) -> Tensor:
        x = self._macaron(x, self.ffn1, self.ln_ffn1)
        x = add(x, self.attn(layer_norm(x, *self.ln_attn), mask))
        x = add(x, self.conv(layer_norm(x, *self.ln_conv)))
        x = self._macaron(x, self.ffn2, self.ln_ffn2)
        return layer_norm(x, *self.ln_out)

    def step(self, x: Tensor, state: "LayerState") -> Tensor:
        """Streaming forward over one chunk, consuming and updating caches."""
        x = self._macaron(x, self.ffn1, self.ln_ffn1)
        attn_in = layer_norm(x, *self.ln_attn)
        k_new, v_new = self.attn.project_kv(attn_in)
        ks = state.cached_keys + [k_new]
        vs = state.cached_values + [v_new]
        keys = ks[0] if len(ks) == 1 else concat(ks, axis=0)
        values = vs[0] if len(vs) == 1 else concat(vs, axis=0)
        x = add(x, self.attn.attend(attn_in, keys, values, None))
        conv_in = layer_norm(x, *self.ln_conv)
        conv_out, state.conv_tail = self.conv.step(conv_in, state.conv_tail)
        x = add(x, conv_out)
        x = self._macaron(x, self.ffn2, self.ln_ffn2)
        state.push_chunk_kv(k_new, v_new)
        return layer_norm(x, *self.ln_out)


class LayerState:
    """Per-layer streaming caches: chunked K/V plus the conv tail."""

    def __init__(self, d_model: int, kernel: int, left_chunks):
        self.left_chunks = left_chunks
        self.kv_chunks = []  # list of (k, v) Tensors, one entry per past chunk
        self.conv_tail = Tensor(np.zeros((kernel - 1, d_model), dtype=np.float32))

    @property
    def cached_keys(self):
        return [k for k, _ in self.kv_chunks]

    @property
    def cached_values(self):
        return [v for _, v in self.kv_chunks]

    def push_chunk_kv(self, k: Tensor, v: Tensor):
        self.kv_chunks.append((k, v))
        if self.left_chunks is not None:
            while len(self.kv_chunks) > self.left_chunks:
                self.kv_chunks.pop(0)

    def cached_frames(self) -> int:
        return sum(k.shape[0] for k, _ in self.kv_chunks)


class Encoder:
    def __init__(self, cfg: EncoderConfig, rng: CounterRng):
        self.cfg = cfg
        self.params = {}
        fr = rng.derive("frontend")
        self.fw1 = uniform_init(fr, (2, cfg.feat_dim, cfg.d_model), 2 * cfg.feat_dim)
        self.fb1 = zeros_init((cfg.d_model,))
        self.fw2 = uniform_init(fr, (2, cfg.d_model, cfg.d_model), 2 * cfg.d_model)
        self.fb2 = zeros_init((cfg.d_model,))
        self.pos = uniform_init(fr, (cfg.max_frames, cfg.d_model), cfg.d_model)
        self.params.update(
            {
                "frontend.conv1.w": self.fw1,
                "frontend.conv1.b": self.fb1,
                "frontend.conv2.w": self.fw2,
                "frontend.conv2.b": self.fb2,
                "frontend.pos": self.pos,
            }
        )
        self.layers = [
            ConformerLayer(rng.derive(f"layer{i}"), cfg, f"layer{i}", self.params)
            for i in range(cfg.num_layers)
        ]

    # -- frontend -----------------------------------------------------------

    def frontend(self, feats: Tensor) -> Tensor:
        """Downsample raw feature frames by 4 and project to d_model.

        Positional embeddings are added separately (encode / streaming step)
        so this op alone maps constant inputs to constant rows.
        """
        if feats.data.ndim != 2 or feats.shape[1] != self.cfg.feat_dim:
            raise DimensionError(
                f"expected features [T, {self.cfg.feat_dim}], got {feats.shape}"
            )
        if feats.shape[0] < DOWNSAMPLE:
            raise ParameterError(
                f"input too short: need at least {DOWNSAMPLE} raw frames, "
                f"got {feats.shape[0]}"
            )
        return self._frontend_unchecked(feats)

    def _frontend_unchecked(self, feats: Tensor) -> Tensor:
        x = swish(strided_conv1d(feats, self.fw1, self.fb1))
        return swish(strided_conv1d(x, self.fw2, self.fb2))

    def add_positions(self, x: Tensor, start_frame: int) -> Tensor:
        stop = start_frame + x.shape[0]
        if stop > self.cfg.max_frames:
            raise ParameterError(
                f"sequence needs positions up to {stop} but the positional "
                f"table holds {self.cfg.max_frames}"
            )
        return add(x, embedding(self.pos, range(start_frame, stop)))

    # -- offline ------------------------------------------------------------

    def encode(self, feats: Tensor, mask: np.ndarray) -> Tensor:
        """Full-utterance forward under ``mask`` (T x T, post-frontend frames)."""
        x = self.frontend(feats)
        if mask.shape != (x.shape[0], x.shape[0]):
            raise DimensionError(
                f"mask shape {mask.shape} does not match {x.shape[0]} frames"
            )
        x = self.add_positions(x, 0)
        for layer in self.layers:
            x = layer.forward(x, mask)
        return x

    # -- streaming ----------------------------------------------------------

    def new_layer_states(self, left_chunks):
        return [
            LayerState(self.cfg.d_model, self.cfg.conv_kernel, left_chunks)
            for _ in self.layers
        ]

    def encode_chunk(self, feats: Tensor, states, start_frame: int) -> Tensor:
        """Streaming forward of one chunk's raw frames over cached context."""
        x = self._frontend_unchecked(feats)
        x = self.add_positions(x, start_frame)
        for layer, st in zip(self.layers, states):
            x = layer.step(x, st)
        return x


def influence_matrix(mask: np.ndarray, conv_kernel: int, num_layers: int) -> np.ndarray:
    """Boolean reachability: which input frames can influence which outputs.

    Composes, per layer, the attention mask with the causal convolution band
    (width kernel-1 to the left); residual paths are covered because both
    factors include the diagonal. Frames outside the returned relation cannot
    change the corresponding output (used by the information-flow tests).
    """
    t = mask.shape[0]
    attn = mask.astype(bool) | np.eye(t, dtype=bool)
    band = np.zeros((t, t), dtype=bool)
    for i in range(t):
        band[i, max(0, i - (conv_kernel - 1)) : i + 1] = True
    per_layer = (band.astype(np.int64) @ attn.astype(np.int64)) > 0
    reach = np.eye(t, dtype=bool)
    for _ in range(num_layers):
        reach = (per_layer.astype(np.int64) @ reach.astype(np.int64)) > 0
    return reach
