"""Sentence sampling strategies: rank a block's sentences by uncertainty and
pick the top fraction for human supervision.

Strategies: quality-estimation (qes), coverage (covs), attention distraction
(ads), random (rs), and query-by-committee (qbc) over the other four.  Every
scorer returns an uncertainty where higher means more worth supervising.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .alignment import AlignmentModel, word_confidence
from .data import Sentence
from .search import Hypothesis

STRATEGIES = ("qes", "covs", "ads", "rs", "qbc")
COMMITTEE = ("qes", "covs", "ads", "rs")

_COLUMN_FLOOR = 1e-10
_VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class SamplingConfig:
    strategy: str
    epsilon: float
    tau_w: float = 0.4
    seed: int = 0
    coverage_flip: bool = False  # ablation: rank most-covered first instead

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if not 0.0 <= self.tau_w <= 1.0:
            raise ValueError("tau_w must lie in [0, 1]")


@dataclass
class ScoredSentence:
    index: int  # stream index
    sentence: Sentence
    hypothesis: Hypothesis | None
    uncertainty: float
    strategy: str


def _as_matrix(attention) -> np.ndarray:
    if isinstance(attention, Hypothesis):
        return attention.content_attention
    return np.asarray(attention, dtype=float)


def score_qe(
    model: AlignmentModel,
    x: Sentence | str | Sequence[str],
    y: Sentence | str | Sequence[str],
    tau_w: float,
) -> float:
    """Quality-estimation uncertainty: one minus the fraction of hypothesis
    words whose confidence exceeds the threshold."""
    y_words = y.words() if isinstance(y, Sentence) else (y.split() if isinstance(y, str) else list(y))
    if not y_words:
        raise ValueError("empty hypothesis")
    confident = sum(1 for w in y_words if word_confidence(model, x, w) > tau_w)
    return 1.0 - confident / len(y_words)


def score_coverage(attention, source_len: int, flip: bool = False) -> float:
    """Coverage-based uncertainty: negated mean log of per-source-column
    attention mass (capped at 1), so uncovered sentences score high.
    Column sums are floored at 1e-10 before the log."""
    if source_len < 1:
        raise ValueError("source_len must be >= 1")
    matrix = _as_matrix(attention)
    if matrix.size == 0:
        column_sums = np.zeros(source_len)
    else:
        column_sums = matrix.sum(axis=0)
    clipped = np.minimum(np.maximum(column_sums, _COLUMN_FLOOR), 1.0)
    coverage = float(np.log(clipped).sum()) / source_len
    return coverage if flip else -coverage


def attention_kurtosis(row) -> float:
    """Fourth standardized moment of one attention row about 1/J (its mean
    for a stochastic row); near-uniform rows (variance < 1e-12) give 0 by
    convention, making a perfectly dispersed row maximally distracted."""
    row = np.asarray(row, dtype=float)
    J = row.shape[0]
    dev = row - 1.0 / J
    variance = float((dev**2).mean())
    if variance < _VARIANCE_FLOOR:
        return 0.0
    return float((dev**4).mean()) / variance**2


def score_attention_distraction(attention) -> float:
    """Attention-distraction score: mean negated kurtosis over target rows.
    Values are <= 0; dispersed (distracted) attention scores highest."""
    matrix = _as_matrix(attention)
    if matrix.shape[0] == 0:
        return 0.0
    return float(np.mean([-attention_kurtosis(row) for row in matrix]))


def score_random(rng: np.random.Generator) -> float:
    """Uniform draw in [0, 1); deterministic per seeded generator."""
    return float(rng.random())


def qbc_score(votes: int, committee_size: int = len(COMMITTEE)) -> float:
    """Vote-entropy-style committee disagreement score, -inf at zero votes."""
    if votes == 0:
        return float("-inf")
    frac = votes / committee_size
    return -frac + math.log(frac)


def selection_size(block_size: int, epsilon: float) -> int:
    return min(block_size, math.ceil(epsilon * block_size))


def select_top(scored: Sequence[ScoredSentence], epsilon: float) -> list[ScoredSentence]:
    """The ceil(epsilon * block) highest-uncertainty sentences, ties broken
    toward earlier stream positions; returned in stream order."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    k = selection_size(len(scored), epsilon)
    ranked = sorted(scored, key=lambda s: (-s.uncertainty, s.index))
    return sorted(ranked[:k], key=lambda s: s.index)


def _strategy_uncertainty(
    strategy: str,
    sentence: Sentence,
    hyp: Hypothesis,
    aligner: AlignmentModel | None,
    config: SamplingConfig,
    rng: np.random.Generator,
) -> float:
    if strategy == "qes":
        if aligner is None:
            raise ValueError("qes sampling needs an alignment model")
        hyp_words = hyp.surface.split()
        if not hyp_words:
            return 1.0  # an empty translation is maximally uncertain
        return score_qe(aligner, sentence.surface, hyp_words, config.tau_w)
    if strategy == "covs":
        return score_coverage(hyp, hyp.attention.shape[1], flip=config.coverage_flip)
    if strategy == "ads":
        return score_attention_distraction(hyp)
    if strategy == "rs":
        return score_random(rng)
    raise ValueError(f"not a direct strategy: {strategy!r}")


def score_and_select(
    block_items: Sequence[tuple[int, Sentence, Hypothesis]],
    config: SamplingConfig,
    aligner: AlignmentModel | None,
    rng: np.random.Generator,
) -> tuple[list[ScoredSentence], list[ScoredSentence]]:
    """Score one block and pick its supervised subset.

    For qbc, each committee member first selects its own top-epsilon subset
    (a member votes for a sentence by including it); the committee score then
    ranks sentences by their vote count.
    Returns (all scored sentences, selection) both in stream order.
    """
    if config.strategy != "qbc":
        scored = [
            ScoredSentence(
                idx,
                sent,
                hyp,
                _strategy_uncertainty(config.strategy, sent, hyp, aligner, config, rng),
                config.strategy,
            )
            for idx, sent, hyp in block_items
        ]
        return scored, select_top(scored, config.epsilon)

    member_scored: dict[str, list[ScoredSentence]] = {}
    for member in COMMITTEE:
        member_scored[member] = [
            ScoredSentence(
                idx,
                sent,
                hyp,
                _strategy_uncertainty(member, sent, hyp, aligner, config, rng),
                member,
            )
            for idx, sent, hyp in block_items
        ]
    votes: dict[int, int] = {idx: 0 for idx, _, _ in block_items}
    for member in COMMITTEE:
        for chosen in select_top(member_scored[member], config.epsilon):
            votes[chosen.index] += 1
    scored = [
        ScoredSentence(idx, sent, hyp, qbc_score(votes[idx]), "qbc")
        for idx, sent, hyp in block_items
    ]
    return scored, select_top(scored, config.epsilon)
