"""Synthetic translation task with a mid-stream vocabulary shift.

Source words are two-syllable strings; base-domain words translate through a
fixed syllable substitution, so a model trained on them can also guess
substitution-consistent translations for unseen words.  Shift-domain source
words are new strings whose translations deliberately break the substitution:
each maps to some existing base-domain target word, so the decoder already
produces the word fluently but the association is only learnable from
supervision — the stream's later sentences mix in more and more of them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import ParallelPair, Sentence

CONSONANTS = "klmnprst"
VOWELS = "aeiou"


@dataclass(frozen=True)
class ToyTaskConfig:
    seed: int = 0
    n_train: int = 2000
    n_dev: int = 150
    n_stream: int = 1500
    min_len: int = 3
    max_len: int = 8
    n_base_words: int = 30
    n_shift_words: int = 12
    shift_start: float = 0.2  # stream fraction where the shift begins
    shift_ramp: float = 0.25  # fraction over which the mix ramps up
    shift_peak: float = 0.6  # shift-word probability after the ramp


@dataclass
class ToyTask:
    config: ToyTaskConfig
    train: list[ParallelPair]
    dev: list[ParallelPair]
    stream_sources: list[str]
    stream_references: list[str]
    lexicon: dict[str, str]
    base_words: list[str] = field(default_factory=list)
    shift_words: list[str] = field(default_factory=list)

    def reference_for(self, source: str) -> str:
        return " ".join(self.lexicon[w] for w in source.split())


def _syllables() -> list[str]:
    return [c + v for c in CONSONANTS for v in VOWELS]


def generate_toy_task(config: ToyTaskConfig = ToyTaskConfig()) -> ToyTask:
    rng = np.random.default_rng(config.seed)
    syllables = _syllables()
    substitution = dict(zip(syllables, rng.permutation(syllables)))

    n_words = config.n_base_words + config.n_shift_words
    combos = [(a, b) for a in syllables for b in syllables]
    picks = rng.choice(len(combos), size=n_words, replace=False)
    words = ["".join(combos[i]) for i in picks]
    base_words = words[: config.n_base_words]
    shift_words = words[config.n_base_words :]

    lexicon: dict[str, str] = {}
    for w in base_words:
        lexicon[w] = substitution[w[:2]] + substitution[w[2:]]
    # Shift words translate to existing base-domain target words, never the
    # one the substitution rule would predict.
    base_targets = [lexicon[w] for w in base_words]
    order = rng.permutation(len(base_targets))
    slot = 0
    for w in shift_words:
        predicted = substitution[w[:2]] + substitution[w[2:]]
        while base_targets[order[slot % len(order)]] == predicted:
            slot += 1
        lexicon[w] = base_targets[order[slot % len(order)]]
        slot += 1

    def sentence(pool) -> str:
        n = int(rng.integers(config.min_len, config.max_len + 1))
        return " ".join(rng.choice(pool, size=n))

    def pair(pool) -> ParallelPair:
        src = sentence(pool)
        return ParallelPair(
            Sentence(src), Sentence(" ".join(lexicon[w] for w in src.split()))
        )

    train = [pair(base_words) for _ in range(config.n_train)]
    dev = [pair(base_words) for _ in range(config.n_dev)]

    stream_sources: list[str] = []
    for t in range(config.n_stream):
        frac = t / config.n_stream
        if frac < config.shift_start:
            p_shift = 0.0
        else:
            ramp = min(1.0, (frac - config.shift_start) / config.shift_ramp)
            p_shift = config.shift_peak * ramp
        n = int(rng.integers(config.min_len, config.max_len + 1))
        chosen = [
            (rng.choice(shift_words) if rng.random() < p_shift else rng.choice(base_words))
            for _ in range(n)
        ]
        stream_sources.append(" ".join(chosen))
    stream_references = [
        " ".join(lexicon[w] for w in src.split()) for src in stream_sources
    ]

    return ToyTask(
        config=config,
        train=train,
        dev=dev,
        stream_sources=stream_sources,
        stream_references=stream_references,
        lexicon=lexicon,
        base_words=base_words,
        shift_words=shift_words,
    )
