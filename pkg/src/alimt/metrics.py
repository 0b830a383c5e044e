"""Translation quality (corpus BLEU) and human-effort (KSMR) measurement."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

MAX_NGRAM_ORDER = 4


@dataclass
class EffortLedger:
    """Interaction counts for one or more completed sessions.

    ``reference_characters`` counts Unicode scalar values of the desired
    sentence(s), matching what the user sees.
    """

    keystrokes: int = 0
    mouse_actions: int = 0
    reference_characters: int = 0

    def __add__(self, other: "EffortLedger") -> "EffortLedger":
        return EffortLedger(
            self.keystrokes + other.keystrokes,
            self.mouse_actions + other.mouse_actions,
            self.reference_characters + other.reference_characters,
        )


@dataclass(frozen=True)
class EffortConvention:
    """Mouse-action accounting for interactive sessions.

    Default: one positioning action per correction plus one final accept
    action.  With ``skip_adjacent_positioning`` the positioning action is
    skipped when the corrected position immediately follows the previous
    correction (the caret is already there).
    """

    skip_adjacent_positioning: bool = False


@dataclass(frozen=True)
class BleuBreakdown:
    score: float
    precisions: tuple[float, float, float, float]
    brevity_penalty: float
    hypothesis_length: int
    reference_length: int


def _words(text: str | Sequence[str]) -> list[str]:
    if isinstance(text, str):
        return text.split()
    return list(text)


def _ngrams(words: Sequence[str], n: int) -> Counter:
    return Counter(tuple(words[i : i + n]) for i in range(len(words) - n + 1))


def corpus_bleu_breakdown(
    hypotheses: Sequence[str | Sequence[str]],
    references: Sequence[str | Sequence[str]],
) -> BleuBreakdown:
    """Corpus-level BLEU-4: geometric mean of clipped n-gram precisions times
    the brevity penalty.  No smoothing: a zero corpus-level precision at any
    order gives a zero score.  An order with no hypothesis n-grams at all
    (0/0) counts as vacuously perfect, so identical corpora always score 1
    even when every sentence is shorter than four words.
    """
    if len(hypotheses) != len(references):
        raise ValueError(
            f"hypothesis/reference length mismatch: {len(hypotheses)} vs {len(references)}"
        )
    if not references:
        raise ValueError("empty reference list")
    matches = [0] * MAX_NGRAM_ORDER
    totals = [0] * MAX_NGRAM_ORDER
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_words, ref_words = _words(hyp), _words(ref)
        hyp_len += len(hyp_words)
        ref_len += len(ref_words)
        for n in range(1, MAX_NGRAM_ORDER + 1):
            hyp_counts = _ngrams(hyp_words, n)
            ref_counts = _ngrams(ref_words, n)
            totals[n - 1] += max(len(hyp_words) - n + 1, 0)
            matches[n - 1] += sum(
                min(c, ref_counts[g]) for g, c in hyp_counts.items()
            )
    precisions = tuple(
        (m / t) if t > 0 else 1.0 for m, t in zip(matches, totals)
    )
    if hyp_len == 0:
        bp = 0.0
    elif hyp_len < ref_len:
        bp = math.exp(1.0 - ref_len / hyp_len)
    else:
        bp = 1.0
    if any(p == 0.0 for p in precisions):
        score = 0.0
    else:
        log_mean = sum(math.log(p) for p in precisions) / MAX_NGRAM_ORDER
        score = bp * math.exp(log_mean)
    return BleuBreakdown(score, precisions, bp, hyp_len, ref_len)


def corpus_bleu(
    hypotheses: Sequence[str | Sequence[str]],
    references: Sequence[str | Sequence[str]],
) -> float:
    """Corpus BLEU in [0, 1] (reports/CLI print it as a percentage)."""
    return corpus_bleu_breakdown(hypotheses, references).score


def ksmr(ledger: EffortLedger) -> float:
    """Keystroke mouse-action ratio: (keystrokes + mouse actions) divided by
    reference characters.  Micro-averaged when ledgers are summed."""
    if ledger.reference_characters <= 0:
        raise ValueError("ksmr needs reference_characters > 0")
    return (ledger.keystrokes + ledger.mouse_actions) / ledger.reference_characters
