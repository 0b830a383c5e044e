"""Byte-pair-encoding subword segmentation.

Merge rules are learned from whitespace words with an end-of-word marker
attached to each word's final character ("cat" -> c, a, t</w>).  Applying a
table is deterministic: rules run in learning order; characters outside the
learned alphabet fall back to single-character tokens, so any string over the
alphabet stays representable.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .data import Sentence

EOW = "</w>"

_FORMAT_HEADER = "alimt-bpe v1"


class DetokenizeError(Exception):
    """Raised on malformed end-of-word marker placement."""


@dataclass(frozen=True)
class MergeTable:
    """Ordered BPE merge rules; order equals learning order."""

    rules: tuple[tuple[str, str], ...]
    marker: str = EOW
    alphabet: frozenset[str] = field(default_factory=frozenset)

    def __len__(self) -> int:
        return len(self.rules)

    def symbols(self) -> set[str]:
        """Every symbol producible by this table: base characters (with and
        without the word-final marker) plus all merged symbols."""
        syms: set[str] = set()
        for ch in self.alphabet:
            syms.add(ch)
            syms.add(ch + self.marker)
        for left, right in self.rules:
            syms.add(left + right)
        return syms


def _word_symbols(word: str, marker: str) -> tuple[str, ...]:
    chars = list(word)
    chars[-1] = chars[-1] + marker
    return tuple(chars)


def learn_bpe(corpus: Iterable[str | Sentence], num_merges: int) -> MergeTable:
    """Learn up to ``num_merges`` merge rules from the corpus.

    Each rule merges the most frequent adjacent symbol pair at its step;
    ties break lexicographically on the pair so learning is deterministic.
    """
    if num_merges < 0:
        raise ValueError("num_merges must be >= 0")
    word_freq: Counter[tuple[str, ...]] = Counter()
    alphabet: set[str] = set()
    empty = True
    for item in corpus:
        empty = False
        surface = item.surface if isinstance(item, Sentence) else item
        for word in surface.split():
            alphabet.update(word)
            word_freq[_word_symbols(word, EOW)] += 1
    if empty:
        raise ValueError("cannot learn BPE from an empty corpus")

    words = [[list(syms), freq] for syms, freq in word_freq.items()]
    rules: list[tuple[str, str]] = []
    for _ in range(num_merges):
        pair_counts: Counter[tuple[str, str]] = Counter()
        for syms, freq in words:
            for a, b in zip(syms, syms[1:]):
                pair_counts[(a, b)] += freq
        if not pair_counts:
            break
        best_count = max(pair_counts.values())
        best = min(p for p, c in pair_counts.items() if c == best_count)
        rules.append(best)
        for entry in words:
            entry[0] = _merge_pair(entry[0], best)
    return MergeTable(tuple(rules), EOW, frozenset(alphabet))


def _merge_pair(symbols: list[str], pair: tuple[str, str]) -> list[str]:
    """Merge occurrences of ``pair`` left-to-right until none remain."""
    left, right = pair
    merged = left + right
    while True:
        out: list[str] = []
        i = 0
        changed = False
        while i < len(symbols):
            if i + 1 < len(symbols) and symbols[i] == left and symbols[i + 1] == right:
                out.append(merged)
                i += 2
                changed = True
            else:
                out.append(symbols[i])
                i += 1
        symbols = out
        if not changed:
            return symbols


def apply_bpe(table: MergeTable, surface: str) -> list[str]:
    """Segment ``surface`` into subword tokens using the table's rules.

    Unknown characters remain single-character tokens.  The surface must use
    canonical single-space word separation for the round-trip guarantee.
    """
    tokens: list[str] = []
    for word in surface.split():
        symbols = list(_word_symbols(word, table.marker))
        for rule in table.rules:
            symbols = _merge_pair(symbols, rule)
        tokens.extend(symbols)
    return tokens


def detokenize(tokens: Sequence[str]) -> str:
    """Invert :func:`apply_bpe`: marker-final tokens end a word."""
    out: list[str] = []
    for tok in tokens:
        body, n = _split_marker(tok)
        out.append(body + " " if n else body)
    surface = "".join(out)
    if surface.endswith(" "):
        surface = surface[:-1]
    return surface


def _split_marker(token: str) -> tuple[str, bool]:
    inner = token.find(EOW)
    if inner != -1 and inner != len(token) - len(EOW):
        raise DetokenizeError(f"marker inside token {token!r}")
    if token.endswith(EOW):
        return token[: -len(EOW)], True
    return token, False


def token_surface(token: str) -> str:
    """Characters a token contributes to the running surface (word-final
    tokens contribute their trailing space)."""
    body, final = _split_marker(token)
    return body + " " if final else body


def vocabulary_tokens(table: MergeTable) -> list[str]:
    """Deterministic token inventory for a table: every producible symbol,
    so any string over the learned alphabet stays decodable (and any valid
    prefix stays producible in constrained search)."""
    return sorted(table.symbols())


def tokenize_sentence(table: MergeTable, text: str | Sentence) -> Sentence:
    surface = text.surface if isinstance(text, Sentence) else " ".join(text.split())
    return Sentence(surface, tuple(apply_bpe(table, surface)))


def save_merge_table(table: MergeTable, path: str | Path) -> None:
    lines = [f"{_FORMAT_HEADER} marker={table.marker}"]
    lines.append("alphabet " + " ".join(sorted(table.alphabet)))
    lines.extend(f"{a} {b}" for a, b in table.rules)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_merge_table(path: str | Path) -> MergeTable:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(_FORMAT_HEADER):
        raise ValueError(f"{path}: not a merge-table file (missing header)")
    marker = lines[0].split("marker=", 1)[1]
    if not lines[1].startswith("alphabet"):
        raise ValueError(f"{path}: missing alphabet line")
    alphabet = frozenset(lines[1].split()[1:])
    rules = []
    for line in lines[2:]:
        if not line:
            continue
        a, b = line.split(" ")
        rules.append((a, b))
    return MergeTable(tuple(rules), marker, alphabet)
