"""Shared builders: tiny models, exhaustive search oracles, and a small
trained workbench for service/CLI tests."""

import itertools

import pytest
import torch

from alimt.alignment import train_alignment
from alimt.bpe import EOW, detokenize
from alimt.data import Sentence, Vocabulary
from alimt.model import ModelConfig, TrainConfig, TranslationModel, build_model
from alimt.pipeline import learn_joint_bpe, train_engine
from alimt.synthetic import ToyTaskConfig, generate_toy_task


def word_token(word: str) -> str:
    return word + EOW


def word_tokens(surface: str) -> tuple[str, ...]:
    return tuple(word_token(w) for w in surface.split())


def word_sentence(surface: str) -> Sentence:
    return Sentence(surface, word_tokens(surface))


TINY_TOKENS = ["a", "b", "a" + EOW, "b" + EOW, "ab" + EOW]


def tiny_model(
    seed: int,
    tgt_tokens=None,
    src_tokens=None,
    max_len: int = 3,
    decoder: str = "gru",
    emb: int = 8,
    hidden: int = 8,
) -> TranslationModel:
    tgt_tokens = list(tgt_tokens or TINY_TOKENS)
    src_tokens = list(src_tokens or ["x", "y", "z"])
    src_vocab = Vocabulary(src_tokens)
    tgt_vocab = Vocabulary(tgt_tokens)
    config = ModelConfig(
        src_vocab_size=len(src_vocab),
        tgt_vocab_size=len(tgt_vocab),
        emb_dim=emb,
        hidden_dim=hidden,
        decoder=decoder,
        max_target_len=max_len,
    )
    return build_model(config, src_vocab, tgt_vocab, seed=seed)


def enumerate_sequences(model: TranslationModel, src_ids, max_len=None):
    """Score every EOS-terminated content sequence up to the length cap.

    Returns a list of (token_ids_without_eos, log_prob) pairs; the search
    oracle is the argmax of this list.
    """
    cap = max_len if max_len is not None else model.config.max_target_len
    content_ids = list(range(3, len(model.tgt_vocab)))
    scored = []
    with torch.no_grad():
        for length in range(cap + 1):
            for seq in itertools.product(content_ids, repeat=length):
                scored.append((seq, model.sequence_log_prob(src_ids, list(seq))))
    return scored


def best_sequence(scored, predicate=None):
    candidates = [(s, lp) for s, lp in scored if predicate is None or predicate(s)]
    if not candidates:
        return None
    return max(candidates, key=lambda item: item[1])


def sequence_surface(model: TranslationModel, seq) -> str:
    return detokenize([model.tgt_vocab.token(t) for t in seq])


MINI_TASK_CONFIG = ToyTaskConfig(
    seed=3,
    n_train=300,
    n_dev=40,
    n_stream=60,
    max_len=5,
    n_base_words=12,
    n_shift_words=4,
)


@pytest.fixture(scope="session")
def mini_workbench(tmp_path_factory):
    """A small trained engine + aligner + task, shared across test modules.

    The engine directory is saved so tests needing a pristine copy can reload
    it (live-service updates mutate the in-memory engine).
    """
    task = generate_toy_task(MINI_TASK_CONFIG)
    table = learn_joint_bpe(task.train, 60)
    engine, history = train_engine(
        task.train,
        task.dev,
        table,
        emb_dim=24,
        hidden_dim=32,
        max_target_len=30,
        train=TrainConfig(epochs=10, batch_size=30, lr=8e-3, patience=10),
        seed=2,
    )
    aligner = train_alignment(
        [(p.source.surface, p.target.surface) for p in task.train], 3, 2
    )
    engine_dir = tmp_path_factory.mktemp("mini-engine")
    engine.save(engine_dir)
    return task, engine_dir, aligner
