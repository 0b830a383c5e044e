"""Beam search decoding, optionally constrained by a validated character prefix.

The constraint is a surface string that may end mid-token.  Admissible
continuations are found with a character trie over the vocabulary's surface
contributions (a word-final token contributes its characters plus a space):
while the constraint is unconsumed, a token is admissible when its
contribution either stays inside the constraint or extends exactly past its
end.  Tokens that would strand the hypothesis just before a required space
(a mid-word token where the constraint demands a word boundary) are pruned
immediately, so some viable path always survives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from .bpe import detokenize, token_surface
from .data import Sentence, Vocabulary
from .model import TranslationModel

_CONSTRAINT_SLACK = 8  # extra steps allowed beyond the constraint's length


class PrefixNotProducibleError(ValueError):
    """No vocabulary token sequence can realize the requested prefix."""


@dataclass(frozen=True, eq=False)
class Hypothesis:
    """A decoded target sequence with its score and attention matrix.

    ``tokens`` are target token ids ending in end-of-sequence; ``attention``
    has one row per token (the end-of-sequence step included), each row a
    distribution over source positions.
    """

    tokens: tuple[int, ...]
    token_strings: tuple[str, ...]  # content tokens only (no end-of-sequence)
    log_score: float
    attention: np.ndarray
    surface: str = field(default="")

    @property
    def content_attention(self) -> np.ndarray:
        """Attention rows for content tokens (end-of-sequence row dropped)."""
        return self.attention[:-1]


class _TrieNode:
    __slots__ = ("children", "terminals", "subtree")

    def __init__(self) -> None:
        self.children: dict[str, _TrieNode] = {}
        self.terminals: list[tuple[int, bool]] = []  # (token id, ends a word)
        self.subtree: list[int] = []


class PrefixTokenTrie:
    """Character trie over token surface contributions."""

    def __init__(self, vocab: Vocabulary):
        self.root = _TrieNode()
        for tid in range(3, len(vocab)):
            surf = token_surface(vocab.token(tid))
            node = self.root
            for ch in surf:
                node = node.children.setdefault(ch, _TrieNode())
            node.terminals.append((tid, surf.endswith(" ")))
        self._fill_subtrees(self.root)

    def _fill_subtrees(self, node: _TrieNode) -> list[int]:
        acc: list[int] = []
        for child in node.children.values():
            acc.extend(t for t, _ in child.terminals)
            acc.extend(self._fill_subtrees(child))
        node.subtree = acc
        return acc

    def admissible(self, remaining: str) -> list[int]:
        """Token ids that may extend a hypothesis whose unconsumed constraint
        is ``remaining`` (non-empty)."""
        out: list[int] = []
        node = self.root
        n = len(remaining)
        for depth, ch in enumerate(remaining, start=1):
            node = node.children.get(ch)
            if node is None:
                return out
            if depth < n:
                boundary_next = remaining[depth] == " "
                out.extend(
                    tid for tid, ends_word in node.terminals if ends_word or not boundary_next
                )
            else:
                out.extend(tid for tid, _ in node.terminals)
                out.extend(node.subtree)
        return out


def _trie_for(model: TranslationModel) -> PrefixTokenTrie:
    trie = getattr(model, "_prefix_trie", None)
    if trie is None:
        trie = PrefixTokenTrie(model.tgt_vocab)
        model._prefix_trie = trie
    return trie


@dataclass
class _Beam:
    tokens: list[int]
    strings: list[str]
    score: float
    alphas: list[np.ndarray]
    emitted: int  # surface characters emitted so far
    last_eow: bool


def beam_search(
    model: TranslationModel,
    src_ids: Sequence[int],
    beam: int,
    constraint: str | None = None,
    max_len: int | None = None,
) -> Hypothesis:
    """Highest-scoring EOS-terminated sequence found with beam width ``beam``.

    With a constraint, the returned hypothesis detokenizes to a string having
    the constraint as an exact character prefix.  Deterministic: candidate
    ties break by score, then earlier expansion.
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")
    if constraint == "":
        constraint = None
    cfg = model.config
    eos = model.tgt_vocab.eos_id
    vocab_size = cfg.tgt_vocab_size
    cap = cfg.max_target_len
    if constraint is not None:
        cap = max(cap, len(constraint) + _CONSTRAINT_SLACK)
        trie = _trie_for(model)

    with torch.no_grad():
        annotations, keys = model.encode(torch.tensor([list(src_ids)], dtype=torch.long))
        init_state = model.initial_state(annotations)

    beams = [_Beam([], [], 0.0, [], 0, False)]
    states = init_state
    finished: list[tuple[float, int, _Beam]] = []
    blocked = np.zeros(vocab_size, dtype=bool)
    blocked[model.tgt_vocab.bos_id] = True
    blocked[model.tgt_vocab.unk_id] = True

    for step in range(cap + 1):
        if not beams:
            break
        y_prev = torch.tensor(
            [b.tokens[-1] if b.tokens else model.tgt_vocab.bos_id for b in beams]
        )
        with torch.no_grad():
            log_probs, alpha, new_states = model.decode_step(
                y_prev, states, annotations, keys
            )
        lp = log_probs.numpy()
        alpha_np = alpha.numpy()

        allowed = np.zeros((len(beams), vocab_size), dtype=bool)
        for i, b in enumerate(beams):
            if constraint is not None and b.emitted < len(constraint):
                ids = trie.admissible(constraint[b.emitted :])
                allowed[i, ids] = True
            else:
                allowed[i, :] = ~blocked
                if constraint is not None:
                    surface_len = b.emitted - (1 if b.last_eow else 0)
                    if surface_len < len(constraint):
                        allowed[i, eos] = False
            if step == cap:
                can_eos = allowed[i, eos]
                allowed[i, :] = False
                allowed[i, eos] = can_eos

        total = np.where(allowed, lp + np.array([b.score for b in beams])[:, None], -np.inf)
        flat = total.ravel()
        order = np.argsort(-flat, kind="stable")[:beam]

        next_beams: list[_Beam] = []
        parent_rows: list[int] = []
        for flat_idx in order:
            score = flat[flat_idx]
            if score == -np.inf:
                break
            i, tok = divmod(int(flat_idx), vocab_size)
            parent = beams[i]
            row = alpha_np[i]
            if tok == eos:
                done = _Beam(
                    parent.tokens + [eos],
                    list(parent.strings),
                    float(score),
                    parent.alphas + [row],
                    parent.emitted,
                    parent.last_eow,
                )
                finished.append((float(score), len(finished), done))
            else:
                tok_str = model.tgt_vocab.token(tok)
                surf = token_surface(tok_str)
                next_beams.append(
                    _Beam(
                        parent.tokens + [tok],
                        parent.strings + [tok_str],
                        float(score),
                        parent.alphas + [row],
                        parent.emitted + len(surf),
                        surf.endswith(" "),
                    )
                )
                parent_rows.append(i)
        if not next_beams:
            break
        if finished:
            best_finished = max(s for s, _, _ in finished)
            if best_finished >= next_beams[0].score:
                break
        states = tuple(s[parent_rows] for s in new_states)
        beams = next_beams

    if not finished:
        raise PrefixNotProducibleError(
            f"search found no complete hypothesis (constraint={constraint!r})"
        )
    finished.sort(key=lambda item: (-item[0], item[1]))
    best = finished[0][2]
    surface = detokenize(best.strings)
    if constraint is not None and not surface.startswith(constraint):
        raise PrefixNotProducibleError(
            f"decoded surface {surface!r} violates constraint {constraint!r}"
        )
    return Hypothesis(
        tokens=tuple(best.tokens),
        token_strings=tuple(best.strings),
        log_score=best.score,
        attention=np.stack(best.alphas),
        surface=surface,
    )


def translate(model: TranslationModel, x: Sentence, beam: int) -> Hypothesis:
    """Most probable target sequence for ``x`` under beam search."""
    return beam_search(model, model.source_ids(x), beam)


def constrained_suffix_search(
    model: TranslationModel, x: Sentence, prefix_chars: str, beam: int
) -> Hypothesis:
    """Most probable hypothesis whose surface starts with ``prefix_chars``;
    with an empty prefix this equals :func:`translate`."""
    return beam_search(model, model.source_ids(x), beam, constraint=prefix_chars)
