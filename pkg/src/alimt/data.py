"""Core data types: sentences, parallel pairs, streams, blocks, vocabularies."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

logger = logging.getLogger(__name__)

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"


class CorpusError(Exception):
    """Raised when corpus or stream ingestion fails."""


@dataclass(frozen=True)
class Sentence:
    """A sentence: surface text plus (optionally) its subword tokenization.

    When both fields are set, detokenizing ``tokens`` must reproduce
    ``surface`` exactly.  Surfaces are canonical: single-space separated,
    no leading/trailing whitespace.
    """

    surface: str
    tokens: tuple[str, ...] | None = None

    def words(self) -> list[str]:
        return self.surface.split()


@dataclass(frozen=True)
class ParallelPair:
    source: Sentence
    target: Sentence

    def __post_init__(self) -> None:
        if not self.source.surface or not self.target.surface:
            raise CorpusError("parallel pair with an empty side")


@dataclass(frozen=True)
class Block:
    """A window of consecutive stream sentences, in stream order."""

    sentences: tuple[Sentence, ...]
    stream_offset: int

    def __len__(self) -> int:
        return len(self.sentences)


def _canonical(text: str) -> str:
    return " ".join(text.split())


class StreamSource:
    """Sequential, single-consumer source of sentences.

    Wraps either an in-memory iterable or a one-sentence-per-line UTF-8 file.
    Each sentence is emitted exactly once, in order; ``position`` counts
    sentences emitted so far.  Empty lines are skipped with a warning (only
    non-empty sentences are admitted to blocks).
    """

    def __init__(self, sentences: Iterable[str | Sentence], name: str = "<memory>"):
        self._iter: Iterator[str | Sentence] = iter(sentences)
        self.name = name
        self.position = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "StreamSource":
        path = Path(path)

        def lines() -> Iterator[str]:
            with path.open("r", encoding="utf-8") as fh:
                for line in fh:
                    yield line.rstrip("\n")

        return cls(lines(), name=str(path))

    def _next_sentence(self) -> Sentence | None:
        while True:
            try:
                item = next(self._iter)
            except StopIteration:
                return None
            except Exception as exc:  # unreadable backing source
                raise CorpusError(
                    f"stream {self.name!r} failed at position {self.position}: {exc}"
                ) from exc
            if isinstance(item, Sentence):
                sent = item
            else:
                surface = _canonical(item)
                if not surface:
                    logger.warning(
                        "skipping empty sentence in stream %s near position %d",
                        self.name,
                        self.position,
                    )
                    continue
                sent = Sentence(surface)
            if not sent.surface:
                continue
            self.position += 1
            return sent


def get_block_from_stream(stream: StreamSource, block_size: int) -> Block | None:
    """Pull the next block of up to ``block_size`` sentences.

    Returns ``None`` at end of stream.  A short final block is returned, not
    dropped.
    """
    if block_size < 1:
        raise ValueError(f"block_size must be >= 1, got {block_size}")
    offset = stream.position
    sentences: list[Sentence] = []
    while len(sentences) < block_size:
        sent = stream._next_sentence()
        if sent is None:
            break
        sentences.append(sent)
    if not sentences:
        return None
    return Block(tuple(sentences), stream_offset=offset)


def iter_blocks(stream: StreamSource, block_size: int) -> Iterator[Block]:
    while (block := get_block_from_stream(stream, block_size)) is not None:
        yield block


def load_parallel_corpus(source_path: str | Path, target_path: str | Path) -> list[ParallelPair]:
    """Load a line-aligned parallel corpus.

    The files must have the same line count; pairs with an empty side are
    skipped with a warning.
    """
    src_lines = Path(source_path).read_text(encoding="utf-8").splitlines()
    tgt_lines = Path(target_path).read_text(encoding="utf-8").splitlines()
    if len(src_lines) != len(tgt_lines):
        raise CorpusError(
            f"line-count mismatch: {source_path} has {len(src_lines)} lines, "
            f"{target_path} has {len(tgt_lines)}"
        )
    pairs: list[ParallelPair] = []
    skipped = 0
    for lineno, (src, tgt) in enumerate(zip(src_lines, tgt_lines), start=1):
        src, tgt = _canonical(src), _canonical(tgt)
        if not src or not tgt:
            skipped += 1
            logger.warning("skipping pair with empty side at line %d", lineno)
            continue
        pairs.append(ParallelPair(Sentence(src), Sentence(tgt)))
    if skipped:
        logger.warning("skipped %d pairs with an empty side", skipped)
    return pairs


class Vocabulary:
    """Bijective token-string <-> integer-id map with reserved specials."""

    def __init__(self, tokens: Iterable[str]):
        self._id_to_token: list[str] = [BOS, EOS, UNK]
        self._token_to_id: dict[str, int] = {BOS: 0, EOS: 1, UNK: 2}
        for tok in tokens:
            if tok not in self._token_to_id:
                self._token_to_id[tok] = len(self._id_to_token)
                self._id_to_token.append(tok)

    bos_id = 0
    eos_id = 1
    unk_id = 2

    def __len__(self) -> int:
        return len(self._id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def id(self, token: str) -> int:
        return self._token_to_id.get(token, self.unk_id)

    def token(self, idx: int) -> str:
        return self._id_to_token[idx]

    def ids(self, tokens: Sequence[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    def tokens(self) -> list[str]:
        return list(self._id_to_token[3:])
