"""Bundles a trained translation model with its subword table.

The engine is the object the adaptation loop, interactive sessions, and live
service share: it tokenizes raw text, decodes (optionally under a prefix
constraint), and applies incremental updates.  Parameter updates take the
engine's write lock; decodes of a block may run against the same snapshot.
"""

from __future__ import annotations

import threading
from pathlib import Path

from . import search
from .bpe import MergeTable, load_merge_table, save_merge_table, tokenize_sentence
from .data import ParallelPair, Sentence
from .model import TranslationModel, load_checkpoint, save_checkpoint, update
from .search import Hypothesis

CHECKPOINT_NAME = "model.pt"
MERGES_NAME = "merges.txt"


class TranslationEngine:
    def __init__(self, model: TranslationModel, merges: MergeTable):
        self.model = model
        self.merges = merges
        self.lock = threading.RLock()

    def tokenize(self, text: str | Sentence) -> Sentence:
        sent = text if isinstance(text, Sentence) else Sentence(" ".join(text.split()))
        if sent.tokens is not None:
            return sent
        return tokenize_sentence(self.merges, sent.surface)

    def translate(self, x: Sentence | str, beam: int) -> Hypothesis:
        return search.translate(self.model, self.tokenize(x), beam)

    def constrained_suffix_search(
        self, x: Sentence | str, prefix_chars: str, beam: int
    ) -> Hypothesis:
        return search.constrained_suffix_search(
            self.model, self.tokenize(x), prefix_chars, beam
        )

    def update(self, pair: ParallelPair, lr: float) -> None:
        """One incremental SGD step on a corrected pair (exclusive)."""
        tokenized = ParallelPair(
            self.tokenize(pair.source), self.tokenize(pair.target)
        )
        with self.lock:
            update(self.model, tokenized, lr)

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        save_checkpoint(self.model, directory / CHECKPOINT_NAME)
        save_merge_table(self.merges, directory / MERGES_NAME)

    @classmethod
    def load(cls, directory: str | Path) -> "TranslationEngine":
        directory = Path(directory)
        return cls(
            load_checkpoint(directory / CHECKPOINT_NAME),
            load_merge_table(directory / MERGES_NAME),
        )
