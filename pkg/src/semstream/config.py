"""Run configuration: defaults, config-file parsing, CLI overrides.

Config files are line-oriented ``key = value`` UTF-8 text; ``#`` starts a
comment. Every field has a default; command-line flags override file values.
The published-scale hyperparameters (12 encoder layers, d_model 512, teacher
dim 768, ...) are expressible by setting the corresponding keys; the defaults
are desk-scale so the test suite runs on one core.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Dict, Optional

from .chunkmask import DctPolicy
from .distill import LossWeights
from .errors import ConfigError
from .model import ModelConfig


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    # model dimensions
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
    # chunk policy
    frame_ms: float = 40.0
    chunked_batch_fraction: float = 0.6
    chunk_ms_min: float = 160.0
    chunk_ms_max: float = 1280.0
    ctx_window_chunks: Optional[int] = None  # None = unlimited past chunks
    # loss weights
    distill_weight: float = 0.2
    fastemit_lambda: float = 0.006
    # optimization
    optimizer: str = "adam"  # "adam" or "sgd", both with decoupled weight decay
    learning_rate: float = 0.0008
    weight_decay: float = 0.01
    batch_size: int = 8
    steps: int = 2000
    checkpoint_every: int = 500
    # teacher provider: empty = deterministic hash teacher, else a file path
    teacher_file: str = ""

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(
            vocab_size=vocab_size,
            feat_dim=self.feat_dim,
            d_model=self.d_model,
            num_heads=self.num_heads,
            ffn_dim=self.ffn_dim,
            encoder_layers=self.encoder_layers,
            conv_kernel=self.conv_kernel,
            max_frames=self.max_frames,
            ctx_layers=self.ctx_layers,
            teacher_dim=self.teacher_dim,
            pred_dim=self.pred_dim,
            joint_dim=self.joint_dim,
            max_symbols_per_frame=self.max_symbols_per_frame,
            frame_ms=self.frame_ms,
        )

    def dct_policy(self) -> DctPolicy:
        return DctPolicy(
            chunked_batch_fraction=self.chunked_batch_fraction,
            chunk_ms_min=self.chunk_ms_min,
            chunk_ms_max=self.chunk_ms_max,
            frame_ms=self.frame_ms,
        )

    def loss_weights(self) -> LossWeights:
        return LossWeights(
            distill_weight=self.distill_weight,
            fastemit_lambda=self.fastemit_lambda,
        )


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    ftype = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
        if ftype == "Optional[int]":
            if raw.lower() in ("none", "unlimited", ""):
                return None
            return int(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value {raw!r} for config key {key!r}") from exc


def parse_config_text(text: str) -> Dict[str, str]:
    pairs: Dict[str, str] = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {ln}: expected 'key = value', got {line!r}")
        key, value = stripped.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def apply_overrides(cfg: RunConfig, pairs: Dict[str, str]) -> RunConfig:
    updates = {}
    for key, raw in pairs.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        updates[key] = _coerce(key, raw)
    return replace(cfg, **updates)


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, str]] = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        cfg = apply_overrides(cfg, parse_config_text(Path(path).read_text("utf-8")))
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg
