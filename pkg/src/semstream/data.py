"""On-disk formats: checkpoints, feature files, vocabularies, manifests.

Checkpoint: magic ``SENS``, format version u32, tensor count u32, then per
tensor a u16 name length + UTF-8 name, u8 rank, u32 dims, and raw
little-endian float32 data. Tensors are written in sorted name order so a
save -> load -> save round trip is byte-identical.

Feature file: magic ``FEAT``, frame count u32, feature dim u32, then raw
little-endian float32 rows.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .errors import DataError, FormatError
from .transducer import Vocabulary

CHECKPOINT_MAGIC = b"SENS"
CHECKPOINT_VERSION = 1
FEATURE_MAGIC = b"FEAT"


def write_checkpoint(path, tensors: Dict[str, np.ndarray]) -> None:
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<I", CHECKPOINT_VERSION)
    blob += struct.pack("<I", len(tensors))
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        encoded = name.encode("utf-8")
        blob += struct.pack("<H", len(encoded))
        blob += encoded
        blob += struct.pack("<B", arr.ndim)
        for dim in arr.shape:
            blob += struct.pack("<I", dim)
        blob += arr.tobytes()
    Path(path).write_bytes(bytes(blob))


def read_checkpoint(path) -> Dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    view = memoryview(raw)

    def take(n: int) -> memoryview:
        nonlocal view
        if len(view) < n:
            raise FormatError(f"{path}: truncated checkpoint")
        chunk, view = view[:n], view[n:]
        return chunk

    if bytes(take(4)) != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad checkpoint magic (expected 'SENS')")
    (version,) = struct.unpack("<I", take(4))
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    (count,) = struct.unpack("<I", take(4))
    out: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = bytes(take(name_len)).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        shape = tuple(struct.unpack("<I", take(4))[0] for _ in range(rank))
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(take(4 * size), dtype="<f4").reshape(shape)
        out[name] = arr.copy()
    if len(view):
        raise FormatError(f"{path}: {len(view)} trailing bytes after last tensor")
    return out


def write_features(path, frames: np.ndarray) -> None:
    arr = np.ascontiguousarray(frames, dtype="<f4")
    if arr.ndim != 2:
        raise FormatError(f"feature array must be 2-D, got shape {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes())


def read_features(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != FEATURE_MAGIC:
        raise FormatError(f"{path}: bad feature-file magic (expected 'FEAT')")
    if len(raw) < 12:
        raise FormatError(f"{path}: truncated feature header")
    frames, dim = struct.unpack("<II", raw[4:12])
    expect = 12 + 4 * frames * dim
    if len(raw) != expect:
        raise FormatError(f"{path}: expected {expect} bytes, found {len(raw)}")
    return np.frombuffer(raw[12:], dtype="<f4").reshape(frames, dim).copy()


def write_vocab(path, vocab: Vocabulary) -> None:
    Path(path).write_text("\n".join(vocab.symbols) + "\n", encoding="utf-8")


def read_vocab(path) -> Vocabulary:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    symbols = tuple(line for line in lines if line != "")
    if not symbols:
        raise FormatError(f"{path}: empty vocabulary file")
    return Vocabulary(symbols)


@dataclass(frozen=True)
class ManifestRecord:
    utterance_id: str
    speaker_id: str
    feature_path: str  # relative to the manifest's directory
    transcript: str


def write_manifest(path, records: Sequence[ManifestRecord]) -> None:
    lines = [
        f"{r.utterance_id}\t{r.speaker_id}\t{r.feature_path}\t{r.transcript}"
        for r in records
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path) -> List[ManifestRecord]:
    records = []
    seen = set()
    for ln, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise FormatError(f"{path}:{ln}: expected 4 tab-separated fields")
        rec = ManifestRecord(*parts)
        if rec.utterance_id in seen:
            raise DataError(f"{path}:{ln}: duplicate utterance id {rec.utterance_id!r}")
        seen.add(rec.utterance_id)
        records.append(rec)
    if not records:
        raise DataError(f"{path}: empty manifest")
    return records


def load_manifest_features(path) -> List[Tuple[ManifestRecord, np.ndarray]]:
    """Manifest records paired with their feature arrays (paths resolved
    relative to the manifest location); validates the declared dimensions."""
    base = Path(path).parent
    out = []
    dim = None
    for rec in read_manifest(path):
        feats = read_features(base / rec.feature_path)
        if dim is None:
            dim = feats.shape[1]
        elif feats.shape[1] != dim:
            raise DataError(
                f"{rec.utterance_id}: feature dim {feats.shape[1]} != {dim}"
            )
        out.append((rec, feats))
    return out


def write_transcripts(path, items: Sequence[Tuple[str, str]]) -> None:
    Path(path).write_text(
        "\n".join(f"{utt_id}\t{text}" for utt_id, text in items) + "\n",
        encoding="utf-8",
    )


def read_transcripts(path) -> Dict[str, str]:
    out: Dict[str, str] = {}
    for ln, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) == 1:
            # an utterance may legitimately decode to an empty transcript
            parts = [parts[0], ""]
        if len(parts) != 2:
            raise FormatError(f"{path}:{ln}: expected id<TAB>text")
        out[parts[0]] = parts[1]
    return out
