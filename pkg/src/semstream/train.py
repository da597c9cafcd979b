"""Training loop: per-batch chunk sampling, composite loss, parameter updates.

Each batch draws one chunk configuration from the policy (chunked or full
context); per utterance the chunk size is clamped to that utterance's frame
count. The loss is the batch mean of the per-utterance composite objective.
Both optimizers apply decoupled weight decay. A NaN/inf loss aborts with the
name of the first non-finite tensor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, TextIO

import numpy as np

from . import data as dataio
from .chunkmask import ChunkSpec, sample_dct_config
from .config import RunConfig
from .distill import FileTeacher, HashTeacher
from .encoder import downsampled_length
from .errors import ConfigError, DimensionError, NonFiniteLossError
from .model import TransducerModel
from .rng import CounterRng
from .tensor import Tape, Tensor, add, scale


@dataclass(frozen=True)
class StepLog:
    step: int
    rnnt: float
    mse: float
    total: float

    def line(self) -> str:
        return f"{self.step}\t{self.rnnt:.6f}\t{self.mse:.6f}\t{self.total:.6f}"


class SgdOptimizer:
    def __init__(self, learning_rate: float, weight_decay: float):
        self.lr = learning_rate
        self.wd = weight_decay

    def step(self, params: Dict[str, Tensor]) -> None:
        for p in params.values():
            if p.grad is None:
                continue
            p.data = p.data * (1.0 - self.lr * self.wd) - self.lr * p.grad


class AdamOptimizer:
    def __init__(self, learning_rate: float, weight_decay: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = learning_rate
        self.wd = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def step(self, params: Dict[str, Tensor]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, p in params.items():
            if p.grad is None:
                continue
            g = p.grad.astype(np.float32)
            m = self.m.get(name)
            if m is None:
                m = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            v = self.v[name]
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * (g * g)
            self.m[name], self.v[name] = m, v
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data = p.data * (1.0 - self.lr * self.wd) - self.lr * update


def make_optimizer(cfg: RunConfig):
    if cfg.optimizer == "sgd":
        return SgdOptimizer(cfg.learning_rate, cfg.weight_decay)
    if cfg.optimizer == "adam":
        return AdamOptimizer(cfg.learning_rate, cfg.weight_decay)
    raise ConfigError(f"unknown optimizer {cfg.optimizer!r} (use 'adam' or 'sgd')")


def make_teacher(cfg: RunConfig):
    if cfg.teacher_file:
        teacher = FileTeacher.load(cfg.teacher_file)
        if teacher.dim != cfg.teacher_dim:
            raise DimensionError(
                f"teacher file dim {teacher.dim} != configured {cfg.teacher_dim}"
            )
        return teacher
    return HashTeacher(cfg.teacher_dim)


def train_model(
    cfg: RunConfig,
    manifest_path,
    vocab_path,
    checkpoint_path=None,
    log_stream: Optional[TextIO] = None,
) -> tuple:
    """Train a fresh model on a manifest; returns (model, step logs)."""
    vocab = dataio.read_vocab(vocab_path)
    dataset = dataio.load_manifest_features(manifest_path)
    teacher = make_teacher(cfg)
    examples = []
    for rec, feats in dataset:
        examples.append(
            {
                "feats": feats,
                "targets": vocab.encode(rec.transcript),
                "teacher": teacher.embedding_for(rec.utterance_id, rec.transcript),
                "frames": downsampled_length(feats.shape[0]),
            }
        )
    model = TransducerModel(cfg.model_config(vocab.size), seed=cfg.seed)
    return (
        model,
        run_training(model, examples, cfg, checkpoint_path, log_stream),
    )


def run_training(
    model: TransducerModel,
    examples: Sequence[dict],
    cfg: RunConfig,
    checkpoint_path=None,
    log_stream: Optional[TextIO] = None,
    trainable: Optional[Sequence[str]] = None,
) -> List[StepLog]:
    """The optimization loop itself; ``trainable`` restricts updated params."""
    policy = cfg.dct_policy()
    weights = cfg.loss_weights()
    optimizer = make_optimizer(cfg)
    order_rng = CounterRng(cfg.seed).derive("batch-order")
    dct_rng = CounterRng(cfg.seed).derive("dct")
    order: List[int] = []
    logs: List[StepLog] = []
    if trainable is None:
        params = model.params
    else:
        params = {name: model.params[name] for name in trainable}

    batch = max(1, min(cfg.batch_size, len(examples)))
    for step in range(1, cfg.steps + 1):
        if len(order) < batch:
            fresh = list(range(len(examples)))
            order_rng.shuffle(fresh)
            order.extend(fresh)
        indices = [order.pop(0) for _ in range(batch)]
        max_frames = max(examples[i]["frames"] for i in indices)
        batch_spec = sample_dct_config(policy, max_frames, dct_rng)

        model.zero_grads()
        with Tape() as tape:
            total_t = None
            rnnt_sum = 0.0
            mse_sum = 0.0
            for i in indices:
                ex = examples[i]
                spec = ChunkSpec(
                    chunk_frames=min(batch_spec.chunk_frames, ex["frames"]),
                    left_chunks=batch_spec.left_chunks,
                    total_frames=ex["frames"],
                )
                losses = model.training_losses(
                    ex["feats"], ex["targets"], ex["teacher"], spec, weights,
                    ctx_window=cfg.ctx_window_chunks,
                )
                rnnt_sum += losses["rnnt"].item()
                mse_sum += losses["mse"].item()
                total_t = losses["total"] if total_t is None else add(total_t, losses["total"])
            mean_total = scale(total_t, 1.0 / batch)
            tape.backward(mean_total)

        total_val = mean_total.item()
        if not math.isfinite(total_val):
            culprit = model.first_nonfinite_tensor() or "loss"
            raise NonFiniteLossError(
                f"non-finite loss at step {step} (first bad tensor: {culprit})",
                tensor_name=culprit,
            )
        optimizer.step(params)
        entry = StepLog(step, rnnt_sum / batch, mse_sum / batch, total_val)
        logs.append(entry)
        if log_stream is not None:
            log_stream.write(entry.line() + "\n")
        if checkpoint_path is not None and cfg.checkpoint_every > 0:
            if step % cfg.checkpoint_every == 0:
                model.save(checkpoint_path)
    if checkpoint_path is not None:
        model.save(checkpoint_path)
    return logs
