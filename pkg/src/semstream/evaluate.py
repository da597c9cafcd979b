"""Word error rate with edit-type breakdown and bootstrap confidence intervals.

WER is micro-averaged: edit counts and reference word counts are summed over
the corpus before dividing. Alignment is minimal-edit with unit costs; cost
ties are resolved preferring substitution over insertion over deletion.
Confidence intervals resample utterances with replacement and report
percentile bounds with linear interpolation; every resample derives its own
seeded stream so the result is deterministic and parallelizable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .errors import ParameterError
from .rng import CounterRng


@dataclass(frozen=True)
class EditCounts:
    insertions: int = 0
    deletions: int = 0
    substitutions: int = 0
    reference_words: int = 0

    @property
    def errors(self) -> int:
        return self.insertions + self.deletions + self.substitutions

    @property
    def wer(self) -> float:
        if self.reference_words == 0:
            raise ParameterError("WER undefined for zero reference words")
        return self.errors / self.reference_words

    def __add__(self, other: "EditCounts") -> "EditCounts":
        return EditCounts(
            self.insertions + other.insertions,
            self.deletions + other.deletions,
            self.substitutions + other.substitutions,
            self.reference_words + other.reference_words,
        )


def tokenize(text: str, lowercase: bool = False) -> List[str]:
    return (text.lower() if lowercase else text).split()


def align(ref: Sequence[str], hyp: Sequence[str]) -> EditCounts:
    """Minimal-edit alignment counts between two word sequences.

    Ties between equal-cost moves prefer substitution, then insertion, then
    deletion (an insertion is a hypothesis word with no reference partner).
    """
    n, m = len(ref), len(hyp)
    # per cell: (cost, ins, del, sub)
    prev = [(j, j, 0, 0) for j in range(m + 1)]
    for i in range(1, n + 1):
        cur = [(i, 0, i, 0)]
        for j in range(1, m + 1):
            d_cost, d_ins, d_del, d_sub = prev[j - 1]
            if ref[i - 1] != hyp[j - 1]:
                d_cost, d_sub = d_cost + 1, d_sub + 1
            best = (d_cost, d_ins, d_del, d_sub)
            i_cost, i_ins, i_del, i_sub = cur[j - 1]
            if i_cost + 1 < best[0]:
                best = (i_cost + 1, i_ins + 1, i_del, i_sub)
            e_cost, e_ins, e_del, e_sub = prev[j]
            if e_cost + 1 < best[0]:
                best = (e_cost + 1, e_ins, e_del + 1, e_sub)
            cur.append(best)
        prev = cur
    cost, ins, dels, subs = prev[m]
    assert cost == ins + dels + subs
    return EditCounts(ins, dels, subs, n)


def corpus_wer(pairs: Sequence[Tuple[Sequence[str], Sequence[str]]]) -> Tuple[float, EditCounts]:
    """Micro-average WER over (reference, hypothesis) word-sequence pairs."""
    if not pairs:
        raise ParameterError("corpus_wer needs at least one pair")
    totals = EditCounts()
    for ref, hyp in pairs:
        totals = totals + align(ref, hyp)
    if totals.reference_words == 0:
        raise ParameterError("corpus has zero reference words")
    return totals.wer, totals


@dataclass(frozen=True)
class BootstrapCI:
    point: float
    lower: float
    upper: float
    resamples: int
    percentiles: Tuple[float, float]
    seed: int

    def __post_init__(self):
        if self.lower > self.upper:
            raise ParameterError("bootstrap bounds out of order")


def bootstrap_ci(
    per_utterance: Sequence[Tuple[int, int]],
    resamples: int = 1000,
    seed: int = 0,
    percentiles: Tuple[float, float] = (2.5, 97.5),
) -> BootstrapCI:
    """Percentile bootstrap over utterances.

    ``per_utterance`` holds (error count, reference word count) per utterance.
    Utterances are resampled with replacement; each resample recomputes the
    micro-average WER; bounds come from linear-interpolation percentiles of
    the resample distribution.
    """
    if not per_utterance:
        raise ParameterError("bootstrap_ci needs at least one utterance")
    errs = np.asarray([e for e, _ in per_utterance], dtype=np.float64)
    words = np.asarray([w for _, w in per_utterance], dtype=np.float64)
    total_words = words.sum()
    if total_words == 0:
        raise ParameterError("bootstrap_ci needs positive total reference words")
    point = float(errs.sum() / total_words)
    n = len(per_utterance)
    base = CounterRng(seed).derive("bootstrap")
    wers = np.empty(resamples, dtype=np.float64)
    for r in range(resamples):
        rng = base.derive(r)
        idx = (rng._raw(n) % np.uint64(n)).astype(np.int64)
        denom = words[idx].sum()
        wers[r] = errs[idx].sum() / denom if denom > 0 else 0.0
    lower, upper = np.percentile(wers, list(percentiles), method="linear")
    return BootstrapCI(
        point=point,
        lower=float(lower),
        upper=float(upper),
        resamples=resamples,
        percentiles=percentiles,
        seed=seed,
    )
