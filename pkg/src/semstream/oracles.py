"""Independent reference implementations used to cross-check the fast paths.

These deliberately avoid the production code's log-space recursions and
vectorized mask construction: the lattice loss is re-derived by exhaustively
enumerating every monotonic alignment in linear probability space, and the
mask by evaluating the chunk-window rule one entry at a time. They back the
``oracle-check`` CLI command and the test suite.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from .transducer import BLANK_ID


def path_sum(log_probs: np.ndarray, targets: Sequence[int]) -> float:
    """Total alignment probability by explicit path enumeration.

    A path starts at (t=0, u=0); a blank consumes a frame, the next target
    label consumes a label slot without advancing time; acceptance requires
    all frames consumed (including a final blank) with all labels emitted.
    Linear-space products, so only suitable for small lattices.
    """
    t_len, u_rows, _ = log_probs.shape
    u_len = u_rows - 1
    probs = np.exp(log_probs.astype(np.float64))

    def walk(t: int, u: int) -> float:
        if t == t_len:
            return 1.0 if u == u_len else 0.0
        total = probs[t, u, BLANK_ID] * walk(t + 1, u)
        if u < u_len:
            total += probs[t, u, targets[u]] * walk(t, u + 1)
        return total

    return walk(0, 0)


def emission_path_sum(log_probs: np.ndarray, targets: Sequence[int]) -> float:
    """Like path_sum but blanks contribute factor one (label products only)."""
    t_len, u_rows, _ = log_probs.shape
    u_len = u_rows - 1
    probs = np.exp(log_probs.astype(np.float64))

    def walk(t: int, u: int) -> float:
        if t == t_len:
            return 1.0 if u == u_len else 0.0
        total = walk(t + 1, u)
        if u < u_len:
            total += probs[t, u, targets[u]] * walk(t, u + 1)
        return total

    return walk(0, 0)


def rnnt_loss_by_enumeration(
    log_probs: np.ndarray, targets: Sequence[int], fastemit_lambda: float = 0.0
) -> float:
    loss = -math.log(path_sum(log_probs, targets))
    if fastemit_lambda > 0.0:
        loss += fastemit_lambda * -math.log(emission_path_sum(log_probs, targets))
    return loss


def mask_by_rule(total_frames: int, chunk_frames: int, left_chunks: Optional[int]) -> np.ndarray:
    """Entry-by-entry evaluation of the chunk attention window rule."""
    mask = np.zeros((total_frames, total_frames), dtype=np.float32)
    for t in range(total_frames):
        for u in range(total_frames):
            ct = t // chunk_frames
            cu = u // chunk_frames
            lower = 0 if left_chunks is None else ct - left_chunks
            if lower <= cu <= ct:
                mask[t, u] = 1.0
    return mask
