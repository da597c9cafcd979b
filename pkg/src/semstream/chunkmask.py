"""Chunk-wise attention masks and the training-time chunk-size policy.

A mask is a T x T 0/1 matrix: entry (t, u) says whether frame t may attend to
frame u. Frames are grouped into chunks of ``chunk_frames`` consecutive
frames; frame t may see its own chunk and up to ``left_chunks`` chunks of
past context (``None`` = all past chunks). Masks are pure functions of the
spec, never serialized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ParameterError
from .rng import CounterRng


@dataclass(frozen=True)
class ChunkSpec:
    """Chunk geometry for one utterance: size S, left context P, length T."""

    chunk_frames: int
    left_chunks: Optional[int]  # None = unlimited past context
    total_frames: int

    def __post_init__(self):
        if self.total_frames < 1:
            raise ParameterError(f"total_frames must be >= 1, got {self.total_frames}")
        if not 1 <= self.chunk_frames <= self.total_frames:
            raise ParameterError(
                f"chunk_frames must be in [1, {self.total_frames}], "
                f"got {self.chunk_frames}"
            )
        if self.left_chunks is not None and self.left_chunks < 0:
            raise ParameterError(f"left_chunks must be >= 0, got {self.left_chunks}")

    @property
    def num_chunks(self) -> int:
        return -(-self.total_frames // self.chunk_frames)

    def chunk_of(self, frame: int) -> int:
        return frame // self.chunk_frames

    def chunk_bounds(self, index: int) -> tuple:
        """Frame range [start, stop) of chunk ``index``; the last chunk may be short."""
        start = index * self.chunk_frames
        return start, min(start + self.chunk_frames, self.total_frames)


@dataclass(frozen=True)
class DctPolicy:
    """Per-batch chunk sampling policy.

    With probability ``chunked_batch_fraction`` a batch trains chunked, with
    the chunk size drawn uniformly (in frames) from the millisecond range;
    otherwise the batch sees full context. ``frame_ms`` is the duration of
    one post-frontend frame (feature hop times the x4 downsampling).
    """

    chunked_batch_fraction: float = 0.6
    chunk_ms_min: float = 160.0
    chunk_ms_max: float = 1280.0
    frame_ms: float = 40.0

    def __post_init__(self):
        if not 0.0 <= self.chunked_batch_fraction <= 1.0:
            raise ParameterError(
                f"chunked_batch_fraction must be in [0,1], "
                f"got {self.chunked_batch_fraction}"
            )
        if self.chunk_ms_min > self.chunk_ms_max:
            raise ParameterError(
                f"chunk_ms_min {self.chunk_ms_min} > chunk_ms_max {self.chunk_ms_max}"
            )
        if self.frame_ms <= 0:
            raise ParameterError(f"frame_ms must be positive, got {self.frame_ms}")


def ms_to_frames(ms: float, frame_ms: float) -> int:
    """Half-up rounding of ms / frame_ms, with a floor of one frame."""
    if ms <= 0:
        raise ParameterError(f"duration must be positive, got {ms} ms")
    if frame_ms <= 0:
        raise ParameterError(f"frame_ms must be positive, got {frame_ms}")
    return max(1, int(math.floor(ms / frame_ms + 0.5)))


def build_mask(spec: ChunkSpec) -> np.ndarray:
    """T x T float32 0/1 matrix: (t, u) = 1 iff chunk(u) in [chunk(t) - P, chunk(t)].

    With unlimited left context the lower bound drops to chunk 0. Rows always
    contain at least one 1 (each frame sees its own chunk), and entries depend
    on frames only through their chunk indices.
    """
    t_frames = spec.total_frames
    chunk_idx = np.arange(t_frames) // spec.chunk_frames
    ct = chunk_idx[:, None]
    cu = chunk_idx[None, :]
    allowed = cu <= ct
    if spec.left_chunks is not None:
        allowed &= cu >= ct - spec.left_chunks
    return allowed.astype(np.float32)


def full_context_spec(total_frames: int) -> ChunkSpec:
    return ChunkSpec(chunk_frames=total_frames, left_chunks=0, total_frames=total_frames)


def sample_dct_config(policy: DctPolicy, total_frames: int, rng: CounterRng) -> ChunkSpec:
    """Draw one chunk configuration for a batch.

    Chunked batches draw S uniformly over the integer frame counts covering
    [chunk_ms_min, chunk_ms_max] (clamped to [1, T]) and P uniformly from
    {0, unlimited}; full-context batches use S = T, P = 0.
    """
    if total_frames < 1:
        raise ParameterError(f"total_frames must be >= 1, got {total_frames}")
    if rng.random() < policy.chunked_batch_fraction:
        lo = min(max(1, ms_to_frames(policy.chunk_ms_min, policy.frame_ms)), total_frames)
        hi = min(max(1, ms_to_frames(policy.chunk_ms_max, policy.frame_ms)), total_frames)
        if lo > hi:
            lo = hi
        size = rng.randint(lo, hi + 1)
        left = rng.choice([0, None])
        return ChunkSpec(chunk_frames=size, left_chunks=left, total_frames=total_frames)
    return full_context_spec(total_frames)
