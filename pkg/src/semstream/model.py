"""Full model assembly: encoder, context module, predictor, and joint.

The model owns a flat name -> parameter mapping (used by the optimizer, the
checkpoint writer, and non-finite-loss diagnostics). Checkpoints are
self-describing: the architecture hyperparameters travel as scalar ``meta.*``
tensors next to the weights, so loading needs no side files.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import data as dataio
from .chunkmask import ChunkSpec, build_mask, full_context_spec
from .context import ContextConfig, ContextModule, attach_context
from .distill import LossWeights, mse_loss, total_loss
from .encoder import Encoder, EncoderConfig, downsampled_length
from .errors import DimensionError, FormatError
from .rng import CounterRng
from .tensor import Tape, Tensor, concat, slice_rows
from .transducer import (
    Emission,
    Joint,
    Predictor,
    greedy_decode,
    rnnt_loss,
)


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    feat_dim: int = 8
    d_model: int = 32
    num_heads: int = 2
    ffn_dim: int = 64
    encoder_layers: int = 2
    conv_kernel: int = 7
    max_frames: int = 1024
    ctx_layers: int = 2
    teacher_dim: int = 16
    pred_dim: int = 16
    joint_dim: int = 32
    max_symbols_per_frame: int = 5
    frame_ms: float = 40.0

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            feat_dim=self.feat_dim,
            num_layers=self.encoder_layers,
            d_model=self.d_model,
            num_heads=self.num_heads,
            ffn_dim=self.ffn_dim,
            conv_kernel=self.conv_kernel,
            max_frames=self.max_frames,
        )

    def context_config(self) -> ContextConfig:
        return ContextConfig(
            d_model=self.d_model,
            num_layers=self.ctx_layers,
            teacher_dim=self.teacher_dim,
        )


def _merge(dst: Dict[str, Tensor], prefix: str, src: Dict[str, Tensor]) -> None:
    for key, tensor in src.items():
        full = f"{prefix}.{key}"
        tensor.name = full
        dst[full] = tensor


class TransducerModel:
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        rng = CounterRng(seed)
        self.encoder = Encoder(cfg.encoder_config(), rng.derive("encoder"))
        self.context = ContextModule(cfg.context_config(), rng.derive("context"))
        self.predictor = Predictor(cfg.vocab_size, cfg.pred_dim, rng.derive("predictor"))
        self.joint = Joint(
            cfg.d_model + cfg.teacher_dim,
            cfg.pred_dim,
            cfg.joint_dim,
            cfg.vocab_size,
            rng.derive("joint"),
        )
        self.params: Dict[str, Tensor] = {}
        _merge(self.params, "encoder", self.encoder.params)
        _merge(self.params, "context", self.context.params)
        _merge(self.params, "predictor", self.predictor.params)
        _merge(self.params, "joint", self.joint.params)

    # -- plumbing -----------------------------------------------------------

    def param_dtype(self):
        return self.joint.wo.data.dtype

    def cast_parameters(self, dtype) -> None:
        for p in self.params.values():
            p.data = p.data.astype(dtype)

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.grad = None

    def first_nonfinite_tensor(self) -> Optional[str]:
        for name, p in self.params.items():
            if not np.all(np.isfinite(p.data)):
                return name
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                return f"grad({name})"
        return None

    # -- offline forward ----------------------------------------------------

    def chunk_contexts(
        self, frames: Tensor, spec: ChunkSpec, ctx_window: Optional[int] = None
    ) -> List[Tensor]:
        """One context per chunk, pooled from up to ctx_window past chunks."""
        contexts = []
        for g in range(spec.num_chunks):
            start, _ = spec.chunk_bounds(g)
            low = 0
            if ctx_window is not None:
                low = max(0, (g - ctx_window) * spec.chunk_frames)
            past = slice_rows(frames, low, start) if start > low else None
            contexts.append(self.context.compute_context(past))
        return contexts

    def enrich(self, frames: Tensor, spec: ChunkSpec, contexts: Sequence[Tensor]) -> Tensor:
        blocks = []
        for g in range(spec.num_chunks):
            start, stop = spec.chunk_bounds(g)
            blocks.append(attach_context(slice_rows(frames, start, stop), contexts[g]))
        return blocks[0] if len(blocks) == 1 else concat(blocks, axis=0)

    def forward_offline(
        self,
        features: np.ndarray,
        spec: Optional[ChunkSpec] = None,
        ctx_window: Optional[int] = None,
    ):
        """(frame embeddings, chunk contexts, enriched frames) for one utterance."""
        feats = Tensor(features, dtype=self.param_dtype())
        total = downsampled_length(features.shape[0])
        if spec is None:
            spec = full_context_spec(total)
        elif spec.total_frames != total:
            raise DimensionError(
                f"chunk spec covers {spec.total_frames} frames but the input "
                f"downsamples to {total}"
            )
        mask = build_mask(spec)
        frames = self.encoder.encode(feats, mask)
        contexts = self.chunk_contexts(frames, spec, ctx_window)
        enriched = self.enrich(frames, spec, contexts)
        return frames, contexts, enriched

    def training_losses(
        self,
        features: np.ndarray,
        target_ids: Sequence[int],
        teacher_vec: np.ndarray,
        spec: Optional[ChunkSpec],
        weights: LossWeights,
        ctx_window: Optional[int] = None,
    ) -> Dict[str, Tensor]:
        """Scalar loss tensors for one utterance: total, transduction, distill."""
        _, contexts, enriched = self.forward_offline(features, spec, ctx_window)
        pred = self.predictor.run(target_ids)
        lattice = self.joint.lattice_log_probs(enriched, pred)
        rnnt = rnnt_loss(lattice, target_ids, fastemit_lambda=weights.fastemit_lambda)
        mse = mse_loss(contexts, teacher_vec)
        return {"total": total_loss(rnnt, mse, weights), "rnnt": rnnt, "mse": mse}

    def decode_offline(
        self,
        features: np.ndarray,
        spec: Optional[ChunkSpec] = None,
        ctx_window: Optional[int] = None,
    ) -> List[Emission]:
        _, _, enriched = self.forward_offline(features, spec, ctx_window)
        return greedy_decode(
            self.joint, self.predictor, enriched, self.cfg.max_symbols_per_frame
        )

    # -- checkpoints ----------------------------------------------------------

    def save(self, path) -> None:
        arrays = {name: p.data.astype("<f4") for name, p in self.params.items()}
        for f in fields(ModelConfig):
            value = getattr(self.cfg, f.name)
            arrays[f"meta.{f.name}"] = np.asarray([float(value)], dtype="<f4")
        dataio.write_checkpoint(path, arrays)

    @classmethod
    def load(cls, path) -> "TransducerModel":
        arrays = dataio.read_checkpoint(path)
        kwargs = {}
        for f in fields(ModelConfig):
            key = f"meta.{f.name}"
            if key not in arrays:
                raise FormatError(f"checkpoint missing architecture entry {key}")
            raw = float(arrays.pop(key)[0])
            kwargs[f.name] = raw if f.type == "float" else int(raw)
        model = cls(ModelConfig(**kwargs), seed=0)
        missing = sorted(set(model.params) - set(arrays))
        extra = sorted(set(arrays) - set(model.params))
        if missing or extra:
            raise FormatError(
                f"checkpoint parameters do not match the architecture "
                f"(missing {missing[:3]}, unexpected {extra[:3]})"
            )
        for name, arr in arrays.items():
            p = model.params[name]
            if tuple(arr.shape) != tuple(p.data.shape):
                raise DimensionError(
                    f"checkpoint tensor {name} has shape {arr.shape}, "
                    f"expected {p.data.shape}"
                )
            p.data = arr.astype(np.float32)
        return model


# ---------------------------------------------------------------------------
# composite-loss gradient check
# ---------------------------------------------------------------------------


def toy_gradcheck_case(seed: int) -> dict:
    """A tiny model plus one random training example, for composite-loss
    finite-difference checks. Small enough that FD over sampled coordinates
    stays fast."""
    rng = CounterRng(seed)
    cfg = ModelConfig(
        vocab_size=4,
        feat_dim=3,
        d_model=4,
        num_heads=2,
        ffn_dim=6,
        encoder_layers=1,
        conv_kernel=3,
        max_frames=16,
        ctx_layers=1,
        teacher_dim=3,
        pred_dim=4,
        joint_dim=5,
    )
    model = TransducerModel(cfg, seed=seed)
    features = rng.normal((8, cfg.feat_dim)).astype(np.float32)
    frames = downsampled_length(features.shape[0])
    spec = ChunkSpec(chunk_frames=1, left_chunks=1, total_frames=frames)
    teacher = rng.normal((cfg.teacher_dim,)).astype(np.float32)
    teacher /= np.linalg.norm(teacher)
    return {
        "model": model,
        "features": features,
        "targets": [1 + int(rng.randint(0, cfg.vocab_size - 1))],
        "teacher": teacher,
        "spec": spec,
    }


def finite_difference_model_check(
    model: TransducerModel,
    features: np.ndarray,
    target_ids: Sequence[int],
    teacher_vec: np.ndarray,
    spec: Optional[ChunkSpec],
    weights: LossWeights,
    coords: Sequence[tuple],
    step: float = 1e-3,
) -> float:
    """Max normalized discrepancy between analytic and central-difference
    gradients of the composite loss at the sampled (param, coordinate) pairs.

    Analytic gradients run at the model's own precision; the numeric side
    temporarily casts all parameters to float64 so the oracle is accurate.
    Normalization matches gradcheck: divide by the largest gradient magnitude.
    """
    model.zero_grads()
    with Tape() as tape:
        losses = model.training_losses(
            features, target_ids, teacher_vec, spec, weights
        )
        tape.backward(losses["total"])
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in model.params.items()
    }
    model.zero_grads()

    saved = {name: p.data for name, p in model.params.items()}
    scale = max(float(np.max(np.abs(g))) for g in analytic.values())
    max_abs = 0.0
    try:
        for name, p in model.params.items():
            p.data = p.data.astype(np.float64)

        def evaluate() -> float:
            return model.training_losses(
                features, target_ids, teacher_vec, spec, weights
            )["total"].item()

        for name, flat_index in coords:
            flat = model.params[name].data.reshape(-1)
            orig = flat[flat_index]
            flat[flat_index] = orig + step
            up = evaluate()
            flat[flat_index] = orig - step
            down = evaluate()
            flat[flat_index] = orig
            numeric = (up - down) / (2.0 * step)
            a = float(analytic[name].reshape(-1)[flat_index])
            scale = max(scale, abs(numeric))
            max_abs = max(max_abs, abs(a - numeric))
    finally:
        for name, p in model.params.items():
            p.data = saved[name]
    return max_abs / max(scale, 1e-8)
