"""Stateful chunk-by-chunk inference.

A stream reproduces the offline masked forward pass incrementally: each push
of S*4 raw frames becomes one chunk of S encoder frames, attended over the
cached left context; the chunk's semantic context is pooled from strictly
past chunks (a ring buffer of final frame embeddings) before the new chunk is
inserted; greedy decoding then advances over the enriched frames, carrying
predictor state across chunks.

Cache sizes depend only on (chunk size, left context, context window, model
dims), never on how much audio has been pushed.
"""

from __future__ import annotations

from typing import List, Optional

import numpy as np

from .context import attach_context
from .encoder import DOWNSAMPLE
from .errors import DimensionError, ParameterError, StateError
from .model import TransducerModel
from .tensor import Tensor, concat
from .transducer import BLANK_ID, Emission, greedy_step


class DecodingStream:
    """Single-owner streaming state over one model's read-only weights."""

    def __init__(
        self,
        model: TransducerModel,
        chunk_frames: int,
        left_chunks: Optional[int] = None,
        ctx_window: Optional[int] = None,
        collect_frames: bool = False,
    ):
        if chunk_frames < 1:
            raise ParameterError(f"chunk_frames must be >= 1, got {chunk_frames}")
        if left_chunks is not None and left_chunks < 0:
            raise ParameterError(f"left_chunks must be >= 0, got {left_chunks}")
        if ctx_window is not None and ctx_window < 1:
            raise ParameterError(f"ctx_window must be positive or None, got {ctx_window}")
        self.model = model
        self.chunk_frames = chunk_frames
        self.left_chunks = left_chunks
        self.ctx_window = ctx_window
        self.chunk_raw = chunk_frames * DOWNSAMPLE

        self._feat_dim = model.cfg.feat_dim
        self._raw_buffer = np.zeros((0, self._feat_dim), dtype=np.float32)
        self._layer_states = model.encoder.new_layer_states(left_chunks)
        self._ctx_ring: List[Tensor] = []
        self._pred_state = model.predictor.initial_state()
        self._pred_out, self._pred_state = model.predictor.step(
            BLANK_ID, self._pred_state
        )
        self._frames_done = 0
        self._chunks_done = 0
        self._closed = False
        self._emissions: List[Emission] = []
        self.frame_log: Optional[List[np.ndarray]] = [] if collect_frames else None

    # -- public surface ------------------------------------------------------

    @property
    def chunks_completed(self) -> int:
        return self._chunks_done

    @property
    def emissions(self) -> List[Emission]:
        return list(self._emissions)

    def push_chunk(self, raw_frames: np.ndarray) -> List[Emission]:
        """Feed raw feature frames; returns emissions of chunks completed now.

        Frames are buffered until a full chunk (S*4 raw frames) is available;
        a short final chunk is handled by close_stream.
        """
        if self._closed:
            raise StateError("push_chunk on a closed stream")
        raw = np.asarray(raw_frames, dtype=np.float32)
        if raw.ndim != 2 or raw.shape[1] != self._feat_dim:
            raise DimensionError(
                f"expected raw frames [n, {self._feat_dim}], got {raw.shape}"
            )
        self._raw_buffer = np.concatenate([self._raw_buffer, raw], axis=0)
        out: List[Emission] = []
        while self._raw_buffer.shape[0] >= self.chunk_raw:
            block = self._raw_buffer[: self.chunk_raw]
            self._raw_buffer = self._raw_buffer[self.chunk_raw :]
            out.extend(self._process_chunk(block))
        return out

    def close_stream(self) -> List[Emission]:
        """Process any buffered partial chunk and seal the stream.

        A remainder that is not a whole number of downsample groups is
        zero-padded stage by stage inside the strided convolutions, exactly
        as the offline frontend pads a ragged utterance end.
        """
        if self._closed:
            raise StateError("close_stream on a closed stream")
        out: List[Emission] = []
        if self._raw_buffer.shape[0] > 0:
            block = self._raw_buffer
            self._raw_buffer = np.zeros((0, self._feat_dim), dtype=np.float32)
            out.extend(self._process_chunk(block))
        self._closed = True
        return out

    def cache_stats(self) -> dict:
        """Current cache occupancy; bounded by configuration, not stream length."""
        return {
            "kv_frames_per_layer": [st.cached_frames() for st in self._layer_states],
            "conv_tail_frames": self.model.cfg.conv_kernel - 1,
            "ctx_ring_chunks": len(self._ctx_ring),
            "raw_buffer_frames": int(self._raw_buffer.shape[0]),
        }

    # -- internals -----------------------------------------------------------

    def _process_chunk(self, raw_block: np.ndarray) -> List[Emission]:
        feats = Tensor(raw_block)
        frames = self.model.encoder.encode_chunk(
            feats, self._layer_states, self._frames_done
        )
        if self.frame_log is not None:
            self.frame_log.append(frames.data.copy())
        # Context uses strictly past chunks: pool before inserting this chunk.
        past = None
        if self._ctx_ring:
            past = (
                self._ctx_ring[0]
                if len(self._ctx_ring) == 1
                else concat(self._ctx_ring, axis=0)
            )
        ctx = self.model.context.compute_context(past)
        enriched = attach_context(frames, ctx)

        emitted: List[Emission] = []
        for local_t in range(enriched.shape[0]):
            row = Tensor(enriched.data[local_t : local_t + 1], dtype=enriched.data.dtype)
            ems, self._pred_out, self._pred_state = greedy_step(
                self.model.joint,
                self.model.predictor,
                row,
                self._pred_out,
                self._pred_state,
                self._frames_done + local_t,
                self.model.cfg.max_symbols_per_frame,
            )
            emitted.extend(ems)

        self._ctx_ring.append(frames)
        if self.ctx_window is not None:
            while len(self._ctx_ring) > self.ctx_window:
                self._ctx_ring.pop(0)
        self._frames_done += frames.shape[0]
        self._chunks_done += 1
        self._emissions.extend(emitted)
        return emitted


def open_stream(
    model: TransducerModel,
    chunk_frames: int,
    left_chunks: Optional[int] = None,
    ctx_window: Optional[int] = None,
    collect_frames: bool = False,
) -> DecodingStream:
    """Fresh stream over ``model``; independent of any other open stream."""
    return DecodingStream(model, chunk_frames, left_chunks, ctx_window, collect_frames)
