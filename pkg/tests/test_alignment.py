import math
import random
from collections import defaultdict

import numpy as np
import pytest

from alimt.alignment import (
    NULL_WORD,
    AlignerConfig,
    AlignmentModel,
    corpus_log_likelihood,
    lexical_prob,
    load_alignment_model,
    save_alignment_model,
    train_alignment,
    word_confidence,
)

NO_NULL = AlignerConfig(use_null=False)


def reference_model1_em(pairs, iters):
    """Minimal independent Model 1 EM (no empty word, uniform positions)."""
    cooc = defaultdict(set)
    for src, tgt in pairs:
        for x in src.split():
            cooc[x].update(tgt.split())
    t = {x: {y: 1.0 / len(ys) for y in ys} for x, ys in cooc.items()}
    for _ in range(iters):
        counts = defaultdict(lambda: defaultdict(float))
        for src, tgt in pairs:
            xs = src.split()
            for y in tgt.split():
                denom = sum(t[x][y] for x in xs)
                for x in xs:
                    counts[x][y] += t[x][y] / denom
        t = {
            x: {y: c / sum(row.values()) for y, c in row.items()}
            for x, row in counts.items()
        }
    return t


TWO_PAIR = [("a b", "x y"), ("a", "x")]


def test_two_pair_corpus_recovers_lexicon():
    model = train_alignment(TWO_PAIR, m1_iters=10, m2_iters=0, config=NO_NULL)
    assert lexical_prob(model, "x", "a") > 0.9
    assert lexical_prob(model, "y", "b") > 0.9


def test_two_pair_corpus_matches_reference_em():
    model = train_alignment(TWO_PAIR, m1_iters=4, m2_iters=0, config=NO_NULL)
    ref = reference_model1_em(TWO_PAIR, 4)
    for x, row in ref.items():
        for y, p in row.items():
            assert lexical_prob(model, y, x) == pytest.approx(p, abs=1e-12)


def test_zero_iterations_gives_uniform_cooccurrence_table():
    model = train_alignment(TWO_PAIR, m1_iters=0, m2_iters=0, config=NO_NULL)
    assert lexical_prob(model, "x", "a") == pytest.approx(0.5)
    assert lexical_prob(model, "y", "a") == pytest.approx(0.5)
    assert lexical_prob(model, "x", "b") == pytest.approx(0.5)


def test_empty_corpus_rejected():
    with pytest.raises(ValueError):
        train_alignment([], 1, 1)


def make_dictionary_corpus(rng, n_types=50, n_pairs=500):
    src_types = [f"s{k}" for k in range(n_types)]
    mapping = {s: f"t{k}" for k, s in enumerate(src_types)}
    pairs = []
    for _ in range(n_pairs):
        words = rng.choices(src_types, k=rng.randint(2, 6))
        pairs.append((" ".join(words), " ".join(mapping[w] for w in words)))
    return pairs, mapping


def test_dictionary_recovery():
    rng = random.Random(29)
    pairs, mapping = make_dictionary_corpus(rng)
    model = train_alignment(pairs, m1_iters=5, m2_iters=3)
    recovered = 0
    for src, tgt in mapping.items():
        if src not in model.table:
            continue
        best = max(model.table[src], key=model.table[src].get)
        recovered += best == tgt
    assert recovered >= 0.95 * len(mapping)
    for src, tgt in list(mapping.items())[:10]:
        assert lexical_prob(model, tgt, src) >= 0.5


def test_lexical_rows_normalize():
    rng = random.Random(3)
    pairs, _ = make_dictionary_corpus(rng, n_types=10, n_pairs=60)
    model = train_alignment(pairs, m1_iters=3, m2_iters=2)
    for x, row in model.table.items():
        assert sum(row.values()) == pytest.approx(1.0, abs=1e-9)
        assert all(0.0 <= p <= 1.0 for p in row.values())


def test_unseen_pair_floor():
    model = train_alignment(TWO_PAIR, m1_iters=2, m2_iters=0)
    assert lexical_prob(model, "never", "seen") == pytest.approx(1e-10)


def random_corpus(rng, n_src=8, n_tgt=8, n_pairs=20):
    pairs = []
    for _ in range(n_pairs):
        n = rng.randint(1, 5)
        src = " ".join(rng.choice([f"s{i}" for i in range(n_src)]) for _ in range(n))
        tgt = " ".join(
            rng.choice([f"t{i}" for i in range(n_tgt)])
            for _ in range(max(1, n + rng.randint(-1, 1)))
        )
        pairs.append((src, tgt))
    return pairs


@pytest.mark.parametrize("distortion", ["tension", "table"])
def test_em_log_likelihood_non_decreasing(distortion):
    rng = random.Random(17)
    for trial in range(20):
        pairs = random_corpus(rng)
        cfg = AlignerConfig(distortion=distortion)
        model = train_alignment(pairs, m1_iters=3, m2_iters=3, config=cfg)
        hist = model.log_likelihood_history
        assert len(hist) == 6
        for prev, nxt in zip(hist, hist[1:]):
            assert nxt >= prev - 1e-9, f"trial {trial}: {hist}"
        # History entries are evaluated before each M step; the final
        # parameters must score at least as well as the last entry.
        assert corpus_log_likelihood(model, pairs) >= hist[-1] - 1e-9


def constructed_model(rows, use_null=True):
    return AlignmentModel(
        table=rows, config=AlignerConfig(use_null=use_null), tension=0.0
    )


def test_word_confidence_row_maximum():
    model = constructed_model(
        {
            NULL_WORD: {"w": 0.1},
            "x1": {"w": 0.2},
            "x2": {"w": 0.7},
            "x3": {"w": 0.4},
        }
    )
    assert word_confidence(model, "x1 x2 x3", "w") == pytest.approx(0.7)


def test_word_confidence_empty_word_participates():
    model = constructed_model({NULL_WORD: {"w": 0.9}, "x1": {"w": 0.2}})
    assert word_confidence(model, "x1", "w") == pytest.approx(0.9)


def test_word_confidence_all_floor():
    model = constructed_model({})
    assert word_confidence(model, "x1 x2", "w") == pytest.approx(1e-10)


def test_word_confidence_order_free():
    model = constructed_model({"a": {"w": 0.3}, "b": {"w": 0.6}, "c": {"w": 0.1}})
    assert word_confidence(model, "a b c", "w") == word_confidence(model, "c b a", "w")


def test_lowercasing_applied():
    model = train_alignment([("Aa Bb", "Xx Yy"), ("Aa", "Xx")], m1_iters=5, m2_iters=0)
    assert lexical_prob(model, "XX", "AA") == lexical_prob(model, "xx", "aa")
    assert lexical_prob(model, "xx", "aa") > 0.5


def test_model_serialization_round_trip(tmp_path):
    rng = random.Random(5)
    pairs, _ = make_dictionary_corpus(rng, n_types=8, n_pairs=50)
    model = train_alignment(pairs, m1_iters=3, m2_iters=2)
    path = tmp_path / "ibm2.tsv"
    save_alignment_model(model, path)
    loaded = load_alignment_model(path)
    assert loaded.tension == model.tension
    assert loaded.config == model.config
    for x, row in model.table.items():
        for y, p in row.items():
            assert loaded.table[x][y] == p


def test_tension_increases_on_diagonal_data():
    # Perfectly monotone word-for-word data should favor a positive tension.
    rng = random.Random(11)
    pairs, _ = make_dictionary_corpus(rng, n_types=12, n_pairs=150)
    model = train_alignment(pairs, m1_iters=3, m2_iters=3)
    assert model.tension > 0.5
