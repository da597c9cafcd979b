"""Teacher fine-tuning dataset construction.

Paraphrase candidates (generated out of process by whatever rewriting tool
the corpus owner prefers; a prompt template ships in the README) are filtered
by similarity against the original and by length, one survivor is drawn per
utterance, and the result is emitted as labeled sentence triplets: positive
pairs carry cosine targets in [0.8, 1], negative pairs (always across two
different speakers) in [-0.2, 0.2], with one negative for every two
positives.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .errors import DataError, FormatError, ParameterError
from .rng import CounterRng

MIN_SIMILARITY = 0.5
MAX_LENGTH_RATIO = 2.0
POSITIVE_LABEL_RANGE = (0.8, 1.0)
NEGATIVE_LABEL_RANGE = (-0.2, 0.2)


@dataclass(frozen=True)
class Utterance:
    id: str
    speaker_id: str
    text: str

    def __post_init__(self):
        if not self.text:
            raise DataError(f"utterance {self.id!r} has empty text")


@dataclass(frozen=True)
class ParaphraseCandidate:
    original_id: str
    text: str

    def __post_init__(self):
        if not self.text:
            raise DataError(f"empty candidate for {self.original_id!r}")


@dataclass(frozen=True)
class Triplet:
    sentence_a: str
    sentence_b: str
    label: float


class TokenOverlapScorer:
    """Multiset token-overlap F1 in [0, 1]; score(a, a) == 1."""

    def score(self, a: str, b: str) -> float:
        ta, tb = a.split(), b.split()
        if not ta and not tb:
            return 1.0
        counts: Dict[str, int] = {}
        for tok in ta:
            counts[tok] = counts.get(tok, 0) + 1
        overlap = 0
        for tok in tb:
            if counts.get(tok, 0) > 0:
                counts[tok] -= 1
                overlap += 1
        return 2.0 * overlap / (len(ta) + len(tb))


def filter_candidates(
    original: Utterance,
    candidates: Sequence[ParaphraseCandidate],
    scorer,
) -> List[ParaphraseCandidate]:
    """Keep candidates scoring >= 0.5 and strictly shorter than twice the
    original (character count); candidates at exactly 2x are rejected.
    Order is preserved, so filtering is idempotent."""
    kept = []
    limit = MAX_LENGTH_RATIO * len(original.text)
    for cand in candidates:
        if scorer.score(original.text, cand.text) < MIN_SIMILARITY:
            continue
        if len(cand.text) >= limit:
            continue
        kept.append(cand)
    return kept


def select_paraphrase(
    filtered: Sequence[ParaphraseCandidate], rng: CounterRng
) -> Optional[ParaphraseCandidate]:
    """Uniform draw among survivors; None when nothing survived."""
    if not filtered:
        return None
    return filtered[rng.randint(0, len(filtered))]


def build_triplets(
    corpus: Sequence[Utterance],
    paraphrases: Dict[str, str],
    rng: CounterRng,
) -> List[Triplet]:
    """Positives (utterance, its paraphrase) then negatives pairing utterances
    of two different speakers, one negative per two positives.

    The second element of a negative is the other utterance's transcription or
    its paraphrase, coin-flipped when a paraphrase exists.
    """
    speakers = {u.speaker_id for u in corpus}
    if len(speakers) < 2:
        raise ParameterError(
            "negative pairs need at least two speakers in the corpus"
        )
    triplets: List[Triplet] = []
    for utt in corpus:
        text = paraphrases.get(utt.id)
        if text is None:
            continue
        label = rng.uniform(*POSITIVE_LABEL_RANGE)
        triplets.append(Triplet(utt.text, text, label))

    num_negatives = len(triplets) // 2
    for _ in range(num_negatives):
        anchor = corpus[rng.randint(0, len(corpus))]
        others = [u for u in corpus if u.speaker_id != anchor.speaker_id]
        other = others[rng.randint(0, len(others))]
        second = other.text
        if other.id in paraphrases and rng.random() < 0.5:
            second = paraphrases[other.id]
        label = rng.uniform(*NEGATIVE_LABEL_RANGE)
        triplets.append(Triplet(anchor.text, second, label))
    return triplets


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------


def read_corpus(path) -> List[Utterance]:
    """One utterance per line: id<TAB>speaker_id<TAB>text."""
    out = []
    seen = set()
    for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise FormatError(f"{path}:{ln}: expected id<TAB>speaker<TAB>text")
        utt = Utterance(*parts)
        if utt.id in seen:
            raise DataError(f"{path}:{ln}: duplicate utterance id {utt.id!r}")
        seen.add(utt.id)
        out.append(utt)
    return out


def read_candidates(path) -> Dict[str, List[ParaphraseCandidate]]:
    """Candidates file: original_id<TAB>candidate_text, several lines per id."""
    table: Dict[str, List[ParaphraseCandidate]] = {}
    for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise FormatError(f"{path}:{ln}: expected id<TAB>candidate")
        table.setdefault(parts[0], []).append(ParaphraseCandidate(parts[0], parts[1]))
    return table


def write_triplets(path, triplets: Sequence[Triplet]) -> None:
    lines = [f"{t.sentence_a}\t{t.sentence_b}\t{t.label:.6f}" for t in triplets]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_triplets(path) -> List[Triplet]:
    out = []
    for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise FormatError(f"{path}:{ln}: expected a<TAB>b<TAB>label")
        out.append(Triplet(parts[0], parts[1], float(parts[2])))
    return out
