"""Assembly helpers shared by the CLI, experiment scripts, and tests:
learn subwords, build the vocabulary, tokenize corpora, train the model,
and wrap everything into a translation engine."""

from __future__ import annotations

import logging

from .bpe import MergeTable, learn_bpe, tokenize_sentence, vocabulary_tokens
from .data import ParallelPair, Vocabulary
from .engine import TranslationEngine
from .model import ModelConfig, TrainConfig, TrainHistory, train_initial

logger = logging.getLogger(__name__)


def learn_joint_bpe(pairs: list[ParallelPair], num_merges: int) -> MergeTable:
    """Merge statistics pooled over both sides of the corpus (one shared table)."""
    text = [p.source.surface for p in pairs] + [p.target.surface for p in pairs]
    return learn_bpe(text, num_merges)


def build_vocabulary(table: MergeTable) -> Vocabulary:
    return Vocabulary(vocabulary_tokens(table))


def tokenize_pairs(table: MergeTable, pairs: list[ParallelPair]) -> list[ParallelPair]:
    return [
        ParallelPair(
            tokenize_sentence(table, p.source.surface),
            tokenize_sentence(table, p.target.surface),
        )
        for p in pairs
    ]


def train_engine(
    pairs: list[ParallelPair],
    dev: list[ParallelPair],
    table: MergeTable,
    *,
    emb_dim: int = 64,
    hidden_dim: int = 64,
    decoder: str = "gru",
    max_target_len: int = 50,
    dtype: str = "float64",
    train: TrainConfig | None = None,
    seed: int = 0,
) -> tuple[TranslationEngine, TrainHistory]:
    """Train a model over the shared subword vocabulary and wrap it with the
    merge table into an engine."""
    vocab = build_vocabulary(table)
    config = ModelConfig(
        src_vocab_size=len(vocab),
        tgt_vocab_size=len(vocab),
        emb_dim=emb_dim,
        hidden_dim=hidden_dim,
        decoder=decoder,
        max_target_len=max_target_len,
        dtype=dtype,
    )
    model, history = train_initial(
        config,
        tokenize_pairs(table, pairs),
        tokenize_pairs(table, dev),
        train,
        vocab,
        vocab,
        seed=seed,
    )
    logger.info(
        "trained engine: %d-token vocab, best dev BLEU %.4f",
        len(vocab),
        max(history.dev_bleu, default=0.0),
    )
    return TranslationEngine(model, table), history
