"""Synthetic desk-scale speech corpus.

Each lexicon word owns a deterministic feature template (a fixed pattern of
``frames_per_word`` raw frames); an utterance's features are the concatenated
templates of its words plus seeded Gaussian noise, so with zero noise the
mapping from audio to words is exact.

The task is built to stress streaming: confusable word pairs share the first
half of their template (only the tail distinguishes them), the default word
length does not divide the common chunk sizes (so words straddle chunk
boundaries), and each subject statistically prefers one of the confusable
objects, so the sentence prefix carries information that resolves an
ambiguous word before its tail arrives. Transcripts come from a tiny
subject-verb-object grammar, speakers are assigned round-robin, and each
utterance ships paraphrase candidates (single-word synonym rewrites plus one
overlong and one off-topic distractor) to exercise the pair-building filters.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from . import data as dataio
from .errors import ParameterError
from .rng import CounterRng, fnv1a64
from .transducer import Vocabulary

SUBJECTS = ("ada", "bell", "cora")
VERBS = ("sees", "likes", "wants")
OBJECTS = ("rocks", "birds", "ships")
TAILS = ("today", "often")
LEXICON = SUBJECTS + VERBS + OBJECTS + TAILS

# words in one group share the template for their first half: they cannot be
# told apart until their tail frames arrive
CONFUSABLE_GROUPS = {
    "rocks": "object-a",
    "birds": "object-a",
    "ships": "object-b",
    "sees": "verb-a",
    "likes": "verb-a",
    "today": "tail-a",
    "often": "tail-a",
}

# subjects statistically prefer one object, so earlier context disambiguates
SUBJECT_OBJECT_BIAS = {"ada": "rocks", "bell": "birds", "cora": "ships"}
OBJECT_BIAS_STRENGTH = 0.75

SYNONYMS = {
    "sees": "spots",
    "likes": "enjoys",
    "wants": "craves",
    "rocks": "stones",
    "birds": "crows",
    "ships": "boats",
    "today": "now",
    "often": "frequently",
}

OFF_TOPIC = "entirely unrelated chatter about nothing relevant"


@dataclass(frozen=True)
class SynthSpec:
    num_utterances: int = 200
    num_speakers: int = 5
    feat_dim: int = 8
    frames_per_word: int = 12  # 3 encoder frames; straddles chunk sizes of 4
    noise: float = 0.05

    def __post_init__(self):
        if self.num_utterances < 1 or self.num_speakers < 1:
            raise ParameterError("need at least one utterance and one speaker")
        if self.frames_per_word < 4:
            raise ParameterError("frames_per_word must cover a downsample group (>= 4)")


@dataclass(frozen=True)
class SynthUtterance:
    id: str
    speaker_id: str
    words: Tuple[str, ...]
    features: np.ndarray

    @property
    def transcript(self) -> str:
        return " ".join(self.words)


@dataclass(frozen=True)
class SynthDataset:
    utterances: Tuple[SynthUtterance, ...]
    candidates: Dict[str, List[str]]
    vocab: Vocabulary


def word_template(word: str, feat_dim: int, frames_per_word: int) -> np.ndarray:
    """Deterministic per-word frame pattern; independent of the corpus seed.

    Words in a confusable group share their first-half frames; the tail is
    always word-specific.
    """
    head_frames = frames_per_word // 2
    group = CONFUSABLE_GROUPS.get(word)
    head_key = f"head:{group or word}:{feat_dim}:{frames_per_word}"
    tail_key = f"tail:{word}:{feat_dim}:{frames_per_word}"
    head = CounterRng(fnv1a64(head_key)).normal((head_frames, feat_dim))
    tail = CounterRng(fnv1a64(tail_key)).normal(
        (frames_per_word - head_frames, feat_dim)
    )
    return np.concatenate([head, tail]).astype(np.float32)


def _pick_object(subject: str, rng: CounterRng) -> str:
    preferred = SUBJECT_OBJECT_BIAS[subject]
    if rng.random() < OBJECT_BIAS_STRENGTH:
        return preferred
    others = [o for o in OBJECTS if o != preferred]
    return rng.choice(others)


def _sentence(rng: CounterRng) -> List[str]:
    subject = rng.choice(SUBJECTS)
    words = [subject, rng.choice(VERBS), _pick_object(subject, rng)]
    if rng.random() < 0.5:
        words += [rng.choice(VERBS), _pick_object(subject, rng)]
    if rng.random() < 0.5:
        words.append(rng.choice(TAILS))
    return words


def _synonym_rewrite(words: List[str], rng: CounterRng) -> str:
    """Replace exactly one synonym-bearing word (keeps token overlap high)."""
    slots = [i for i, w in enumerate(words) if w in SYNONYMS]
    out = list(words)
    if slots:
        i = slots[rng.randint(0, len(slots))]
        out[i] = SYNONYMS[out[i]]
    return " ".join(out)


def _candidates(words: List[str], rng: CounterRng) -> List[str]:
    text = " ".join(words)
    overlong = text + " " + " ".join(["padding"] * (2 * len(words) + 4))
    assert len(overlong) >= 2 * len(text)
    return [
        _synonym_rewrite(words, rng),
        _synonym_rewrite(words, rng),
        overlong,
        OFF_TOPIC,
    ]


def generate(spec: SynthSpec, seed: int = 0) -> SynthDataset:
    base = CounterRng(seed)
    utts = []
    candidates: Dict[str, List[str]] = {}
    for i in range(spec.num_utterances):
        rng = base.derive(f"utt{i}")
        words = _sentence(rng)
        feats = np.concatenate(
            [word_template(w, spec.feat_dim, spec.frames_per_word) for w in words]
        )
        if spec.noise > 0:
            noise = base.derive(f"noise{i}").normal(feats.shape).astype(np.float32)
            feats = feats + spec.noise * noise
        utt_id = f"utt{i:04d}"
        utts.append(
            SynthUtterance(
                id=utt_id,
                speaker_id=f"spk{i % spec.num_speakers}",
                words=tuple(words),
                features=feats.astype(np.float32),
            )
        )
        candidates[utt_id] = _candidates(words, base.derive(f"cand{i}"))
    vocab = Vocabulary(("<blank>",) + LEXICON)
    return SynthDataset(tuple(utts), candidates, vocab)


def write_dataset(ds: SynthDataset, outdir) -> Dict[str, Path]:
    """Write manifest, vocabulary, reference transcripts, paraphrase
    candidates, a 3-column corpus file, and one feature file per utterance."""
    out = Path(outdir)
    (out / "feats").mkdir(parents=True, exist_ok=True)
    records = []
    for utt in ds.utterances:
        rel = f"feats/{utt.id}.feat"
        dataio.write_features(out / rel, utt.features)
        records.append(
            dataio.ManifestRecord(utt.id, utt.speaker_id, rel, utt.transcript)
        )
    paths = {
        "manifest": out / "manifest.tsv",
        "vocab": out / "vocab.txt",
        "refs": out / "refs.tsv",
        "corpus": out / "corpus.tsv",
        "candidates": out / "candidates.tsv",
    }
    dataio.write_manifest(paths["manifest"], records)
    dataio.write_vocab(paths["vocab"], ds.vocab)
    dataio.write_transcripts(paths["refs"], [(u.id, u.transcript) for u in ds.utterances])
    corpus_lines = [f"{u.id}\t{u.speaker_id}\t{u.transcript}" for u in ds.utterances]
    paths["corpus"].write_text("\n".join(corpus_lines) + "\n", encoding="utf-8")
    cand_lines = []
    for utt in ds.utterances:
        for cand in ds.candidates[utt.id]:
            cand_lines.append(f"{utt.id}\t{cand}")
    paths["candidates"].write_text("\n".join(cand_lines) + "\n", encoding="utf-8")
    return paths
