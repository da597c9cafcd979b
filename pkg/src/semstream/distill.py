"""Teacher embedding providers and the composite training objective.

The teacher is abstract: anything that maps an utterance to a fixed-size
embedding. Two implementations ship here: a deterministic test teacher that
hashes the transcript (64-bit FNV-1a) into the counter-based generator and
normalizes the resulting Gaussian draw to unit length, and a file-backed
teacher that serves precomputed embeddings keyed by utterance id. Teacher
fine-tuning itself happens out of process; this module only consumes vectors.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Sequence

import numpy as np

from .errors import DataError, DimensionError, FormatError, ParameterError
from .rng import CounterRng, fnv1a64
from .tensor import Tensor, add, concat, mean_all, mul, scale, sub


@dataclass(frozen=True)
class LossWeights:
    distill_weight: float = 0.2
    fastemit_lambda: float = 0.006

    def __post_init__(self):
        if self.distill_weight < 0:
            raise ParameterError(f"distill_weight must be >= 0, got {self.distill_weight}")
        if self.fastemit_lambda < 0:
            raise ParameterError(f"fastemit_lambda must be >= 0, got {self.fastemit_lambda}")


class HashTeacher:
    """Deterministic test teacher: same text always yields the same unit vector."""

    def __init__(self, dim: int):
        if dim <= 0:
            raise ParameterError(f"teacher dim must be positive, got {dim}")
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        rng = CounterRng(fnv1a64(text))
        v = rng.normal((self.dim,))
        return (v / np.linalg.norm(v)).astype(np.float32)

    def embedding_for(self, utterance_id: str, text: str) -> np.ndarray:
        return self.embed(text)


class FileTeacher:
    """Embeddings precomputed elsewhere, keyed by utterance id.

    File format: a header line ``#dim=<N>`` then one record per line,
    ``utterance_id<TAB>base64(little-endian float32 values)``. Vectors are
    served as stored; only the dimension is validated.
    """

    def __init__(self, dim: int, table: Dict[str, np.ndarray]):
        self.dim = dim
        self._table = table

    @classmethod
    def load(cls, path) -> "FileTeacher":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or not lines[0].startswith("#dim="):
            raise FormatError(f"{path}: missing '#dim=<N>' header")
        try:
            dim = int(lines[0][len("#dim=") :])
        except ValueError as exc:
            raise FormatError(f"{path}: bad dimension header {lines[0]!r}") from exc
        table = {}
        for ln, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            try:
                utt_id, payload = line.split("\t")
            except ValueError as exc:
                raise FormatError(f"{path}:{ln}: expected id<TAB>base64") from exc
            vec = np.frombuffer(base64.b64decode(payload), dtype="<f4")
            if vec.size != dim:
                raise FormatError(
                    f"{path}:{ln}: vector has {vec.size} values, header says {dim}"
                )
            table[utt_id] = vec.astype(np.float32)
        return cls(dim, table)

    @staticmethod
    def save(path, dim: int, table: Dict[str, np.ndarray]) -> None:
        out = [f"#dim={dim}"]
        for utt_id, vec in table.items():
            v = np.asarray(vec, dtype="<f4")
            if v.size != dim:
                raise DimensionError(f"vector for {utt_id} has size {v.size}, not {dim}")
            out.append(f"{utt_id}\t{base64.b64encode(v.tobytes()).decode('ascii')}")
        Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")

    def embedding_for(self, utterance_id: str, text: str) -> np.ndarray:
        try:
            return self._table[utterance_id]
        except KeyError as exc:
            raise DataError(f"no teacher embedding for utterance {utterance_id!r}") from exc


def mse_loss(chunk_contexts: Sequence[Tensor], teacher_vec: np.ndarray) -> Tensor:
    """Mean over chunks and dimensions of (context - teacher)^2.

    Every chunk's context is pulled toward the single embedding of the full
    transcription.
    """
    if not chunk_contexts:
        raise ParameterError("mse_loss needs at least one chunk context")
    stacked = (
        chunk_contexts[0]
        if len(chunk_contexts) == 1
        else concat(list(chunk_contexts), axis=0)
    )
    target = np.asarray(teacher_vec, dtype=stacked.data.dtype).reshape(1, -1)
    if target.shape[1] != stacked.shape[1]:
        raise DimensionError(
            f"teacher dim {target.shape[1]} does not match context dim "
            f"{stacked.shape[1]}"
        )
    diff = sub(stacked, Tensor(target, dtype=stacked.data.dtype))
    return mean_all(mul(diff, diff))


def total_loss(rnnt: Tensor, mse: Tensor, weights: LossWeights) -> Tensor:
    """Transduction loss plus distill_weight times the distillation loss."""
    return add(rnnt, scale(mse, weights.distill_weight))
