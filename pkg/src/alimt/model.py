"""Reference desk-scale translation model.

Single-layer bidirectional GRU encoder; single-cell gated recurrent decoder
with a general bilinear attention score and a deep-output readout.  An
optional two-block conditional-LSTM decoder ("clstm") puts the attention
between two LSTM cells.  Training and incremental adaptation run in 64-bit
arithmetic by default so gradient checks are reproducible; a 32-bit mode
exists for speed.
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import torch
from torch import Tensor, nn

from .data import ParallelPair, Sentence, Vocabulary
from .metrics import corpus_bleu

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "alimt-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    src_vocab_size: int
    tgt_vocab_size: int
    emb_dim: int = 64
    hidden_dim: int = 64
    decoder: str = "gru"  # "gru" | "clstm"
    max_target_len: int = 50
    dtype: str = "float64"  # "float64" | "float32"
    grad_norm_cap: float = 5.0

    def torch_dtype(self) -> torch.dtype:
        return torch.float64 if self.dtype == "float64" else torch.float32


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 50
    lr: float = 2e-4
    optimizer: str = "adam"  # "adam" | "sgd"
    patience: int = 5
    eval_beam: int = 1
    shuffle_seed: int = 0
    checkpoint_dir: str | None = None
    checkpoint_every: int = 5  # epochs


class EmptySourceError(ValueError):
    """Source sentence tokenized to an empty sequence."""


class TranslationModel(nn.Module):
    """Encoder-decoder parameters plus the vocabularies they index."""

    def __init__(self, config: ModelConfig, src_vocab: Vocabulary, tgt_vocab: Vocabulary):
        super().__init__()
        if len(src_vocab) != config.src_vocab_size or len(tgt_vocab) != config.tgt_vocab_size:
            raise ValueError("vocabulary sizes do not match the config")
        self.config = config
        self.src_vocab = src_vocab
        self.tgt_vocab = tgt_vocab
        E, H = config.emb_dim, config.hidden_dim
        self.src_emb = nn.Embedding(config.src_vocab_size, E)
        self.tgt_emb = nn.Embedding(config.tgt_vocab_size, E)
        self.encoder = nn.GRU(E, H, batch_first=True, bidirectional=True)
        self.dec_init = nn.Linear(2 * H, H)
        self.attn_key = nn.Linear(2 * H, H, bias=False)  # bilinear score: q . (W h_j)
        if config.decoder == "gru":
            self.query = nn.Linear(H + E, H)
            self.cell = nn.GRUCell(E + 2 * H, H)
        elif config.decoder == "clstm":
            self.cell1 = nn.LSTMCell(E, H)
            self.cell2 = nn.LSTMCell(2 * H, H)
        else:
            raise ValueError(f"unknown decoder type {config.decoder!r}")
        self.read_state = nn.Linear(H, H)
        self.read_ctx = nn.Linear(2 * H, H)
        self.read_emb = nn.Linear(E, H)
        self.out_proj = nn.Linear(H, config.tgt_vocab_size)
        self.to(config.torch_dtype())

    # -- encoding ---------------------------------------------------------

    def encode(self, src_ids: Tensor, lengths: Tensor | None = None) -> tuple[Tensor, Tensor]:
        """Annotations [B, J, 2H] and their bilinear keys [B, J, H]."""
        emb = self.src_emb(src_ids)
        if lengths is not None:
            packed = nn.utils.rnn.pack_padded_sequence(
                emb, lengths.cpu(), batch_first=True, enforce_sorted=False
            )
            out, _ = self.encoder(packed)
            annotations, _ = nn.utils.rnn.pad_packed_sequence(out, batch_first=True)
        else:
            annotations, _ = self.encoder(emb)
        return annotations, self.attn_key(annotations)

    def initial_state(self, annotations: Tensor, src_mask: Tensor | None = None) -> tuple[Tensor, ...]:
        if src_mask is None:
            mean = annotations.mean(dim=1)
        else:
            w = src_mask.to(annotations.dtype)
            mean = (annotations * w.unsqueeze(-1)).sum(dim=1) / w.sum(dim=1, keepdim=True)
        s0 = torch.tanh(self.dec_init(mean))
        if self.config.decoder == "gru":
            return (s0,)
        zeros = torch.zeros_like(s0)
        return (s0, zeros, zeros)  # (h2, c1, c2); h1 starts from h2

    # -- one decoder step --------------------------------------------------

    def decode_step(
        self,
        y_prev: Tensor,
        state: tuple[Tensor, ...],
        annotations: Tensor,
        keys: Tensor,
        src_mask: Tensor | None = None,
    ) -> tuple[Tensor, Tensor, tuple[Tensor, ...]]:
        """Process one target position for a batch of decoder states.

        Returns (log-probabilities [B, V], attention row [B, J], new state).
        ``annotations``/``keys`` may have batch size 1 and broadcast over B.
        """
        emb = self.tgt_emb(y_prev)
        if self.config.decoder == "gru":
            (s_prev,) = state
            q = torch.tanh(self.query(torch.cat([s_prev, emb], dim=-1)))
        else:
            s_prev, c1_prev, c2_prev = state
            h1, c1 = self.cell1(emb, (s_prev, c1_prev))
            q = h1
        scores = torch.matmul(keys, q.unsqueeze(-1)).squeeze(-1)  # [B, J]
        if src_mask is not None:
            scores = scores.masked_fill(~src_mask, float("-inf"))
        alpha = torch.softmax(scores, dim=-1)
        ctx = torch.matmul(alpha.unsqueeze(1), annotations).squeeze(1)  # [B, 2H]
        if self.config.decoder == "gru":
            s = self.cell(torch.cat([emb, ctx], dim=-1), s_prev)
            new_state: tuple[Tensor, ...] = (s,)
        else:
            h2, c2 = self.cell2(ctx, (h1, c2_prev))
            s = h2
            new_state = (h2, c1, c2)
        readout = torch.tanh(self.read_state(s) + self.read_ctx(ctx) + self.read_emb(emb))
        log_probs = torch.log_softmax(self.out_proj(readout), dim=-1)
        return log_probs, alpha, new_state

    # -- losses ------------------------------------------------------------

    def pair_loss(self, src_ids: Sequence[int], tgt_ids: Sequence[int]) -> Tensor:
        """Teacher-forced cross-entropy of one pair, summed over target tokens
        (the end-of-sequence token included)."""
        if not src_ids:
            raise EmptySourceError("empty source token sequence")
        device_ids = torch.tensor([list(src_ids)], dtype=torch.long)
        annotations, keys = self.encode(device_ids)
        state = self.initial_state(annotations)
        bos, eos = self.tgt_vocab.bos_id, self.tgt_vocab.eos_id
        inputs = [bos] + list(tgt_ids)
        targets = list(tgt_ids) + [eos]
        loss = torch.zeros((), dtype=self.config.torch_dtype())
        for y_prev, y_true in zip(inputs, targets):
            log_probs, _, state = self.decode_step(
                torch.tensor([y_prev]), state, annotations, keys
            )
            loss = loss - log_probs[0, y_true]
        return loss

    def sequence_log_prob(self, src_ids: Sequence[int], tgt_ids: Sequence[int]) -> float:
        """log p(target | source) for a full token sequence (EOS appended)."""
        with torch.no_grad():
            return -float(self.pair_loss(src_ids, tgt_ids))

    def batch_loss(self, batch: list[tuple[list[int], list[int]]]) -> Tensor:
        """Mean over the batch of per-pair summed cross-entropies."""
        B = len(batch)
        src_lens = [len(s) for s, _ in batch]
        tgt_lens = [len(t) + 1 for _, t in batch]  # +1 for EOS prediction
        J, T = max(src_lens), max(tgt_lens)
        src = torch.zeros(B, J, dtype=torch.long)
        for b, (s, _) in enumerate(batch):
            src[b, : len(s)] = torch.tensor(s)
        src_mask = torch.arange(J).unsqueeze(0) < torch.tensor(src_lens).unsqueeze(1)
        bos, eos = self.tgt_vocab.bos_id, self.tgt_vocab.eos_id
        inputs = torch.full((B, T), eos, dtype=torch.long)
        targets = torch.full((B, T), eos, dtype=torch.long)
        tgt_mask = torch.zeros(B, T, dtype=torch.bool)
        for b, (_, t) in enumerate(batch):
            seq = [bos] + t
            inputs[b, : len(seq)] = torch.tensor(seq)
            targets[b, : len(t)] = torch.tensor(t)
            tgt_mask[b, : len(t) + 1] = True
        annotations, keys = self.encode(src, torch.tensor(src_lens))
        state = self.initial_state(annotations, src_mask)
        total = torch.zeros((), dtype=self.config.torch_dtype())
        for t in range(T):
            log_probs, _, state = self.decode_step(
                inputs[:, t], state, annotations, keys, src_mask
            )
            step_nll = -log_probs.gather(1, targets[:, t : t + 1]).squeeze(1)
            total = total + (step_nll * tgt_mask[:, t].to(step_nll.dtype)).sum()
        return total / B

    # -- convenience -------------------------------------------------------

    def source_ids(self, x: Sentence) -> list[int]:
        if x.tokens is None:
            raise ValueError("sentence is not tokenized")
        ids = self.src_vocab.ids(x.tokens)
        if not ids:
            raise EmptySourceError(f"no tokens for sentence {x.surface!r}")
        return ids

    def pair_ids(self, pair: ParallelPair) -> tuple[list[int], list[int]]:
        if pair.source.tokens is None or pair.target.tokens is None:
            raise ValueError("pair is not tokenized")
        return (
            self.source_ids(pair.source),
            self.tgt_vocab.ids(pair.target.tokens),
        )


def build_model(
    config: ModelConfig,
    src_vocab: Vocabulary,
    tgt_vocab: Vocabulary,
    seed: int = 0,
) -> TranslationModel:
    torch.manual_seed(seed)
    return TranslationModel(config, src_vocab, tgt_vocab)


def loss_and_gradients(
    model: TranslationModel, pair: ParallelPair | tuple[Sequence[int], Sequence[int]]
) -> tuple[float, dict[str, Tensor]]:
    """Pure evaluation of the pair's cross-entropy and its parameter
    gradients; the model is left untouched."""
    src_ids, tgt_ids = pair if isinstance(pair, tuple) else model.pair_ids(pair)
    loss = model.pair_loss(src_ids, tgt_ids)
    names, params = zip(*model.named_parameters())
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    grad_map = {
        n: (g if g is not None else torch.zeros_like(p))
        for n, p, g in zip(names, params, grads)
    }
    return float(loss.detach()), grad_map


def update(
    model: TranslationModel,
    pair: ParallelPair | tuple[Sequence[int], Sequence[int]],
    lr: float,
) -> TranslationModel:
    """One vanilla-SGD step on the pair's cross-entropy.

    Gradients are norm-capped at ``config.grad_norm_cap``; a non-finite loss
    or gradient aborts the step, leaving parameters unchanged.
    """
    if lr < 0:
        raise ValueError("learning rate must be >= 0")
    loss, grads = loss_and_gradients(model, pair)
    if not math.isfinite(loss):
        logger.error("non-finite loss %r, skipping update", loss)
        return model
    flat = [g for g in grads.values()]
    total_norm = torch.sqrt(sum((g * g).sum() for g in flat))
    if not torch.isfinite(total_norm):
        logger.error("non-finite gradient norm, skipping update")
        return model
    cap = model.config.grad_norm_cap
    scale = 1.0 if float(total_norm) <= cap else cap / float(total_norm)
    with torch.no_grad():
        for name, param in model.named_parameters():
            param -= (lr * scale) * grads[name]
    return model


@dataclass
class TrainHistory:
    dev_bleu: list[float] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False
    diverged: bool = False


def train_initial(
    config: ModelConfig,
    corpus: list[ParallelPair],
    dev: list[ParallelPair],
    train: TrainConfig | None = None,
    src_vocab: Vocabulary | None = None,
    tgt_vocab: Vocabulary | None = None,
    seed: int = 0,
) -> tuple[TranslationModel, TrainHistory]:
    """Mini-batch training with dev-BLEU early stopping.

    Returns the parameters of the best dev-BLEU checkpoint.  Divergence
    (non-finite loss) aborts with the last good checkpoint.
    """
    from .search import translate  # deferred: search depends on this module

    if not corpus:
        raise ValueError("empty training corpus")
    train = train or TrainConfig()
    if src_vocab is None or tgt_vocab is None:
        raise ValueError("vocabularies are required")
    model = build_model(config, src_vocab, tgt_vocab, seed=seed)
    history = TrainHistory()
    if train.epochs == 0:
        return model, history

    examples = [model.pair_ids(p) for p in corpus]
    dev_refs = [p.target.surface for p in dev]
    if train.optimizer == "adam":
        opt = torch.optim.Adam(model.parameters(), lr=train.lr)
    else:
        opt = torch.optim.SGD(model.parameters(), lr=train.lr)

    gen = torch.Generator().manual_seed(train.shuffle_seed)
    best_state = copy.deepcopy(model.state_dict())
    best_bleu = -1.0
    evals_since_best = 0

    def dev_bleu() -> float:
        if not dev:
            return 0.0
        with torch.no_grad():
            hyps = [translate(model, p.source, train.eval_beam).surface for p in dev]
        return corpus_bleu(hyps, dev_refs)

    for epoch in range(train.epochs):
        order = torch.randperm(len(examples), generator=gen).tolist()
        epoch_loss = 0.0
        model.train()
        for start in range(0, len(order), train.batch_size):
            batch = [examples[i] for i in order[start : start + train.batch_size]]
            opt.zero_grad()
            loss = model.batch_loss(batch)
            if not torch.isfinite(loss):
                logger.error("training diverged at epoch %d; restoring best checkpoint", epoch)
                history.diverged = True
                model.load_state_dict(best_state)
                return model, history
            loss.backward()
            nn.utils.clip_grad_norm_(model.parameters(), config.grad_norm_cap)
            opt.step()
            epoch_loss += float(loss.detach())
        model.eval()
        history.train_loss.append(epoch_loss)
        bleu = dev_bleu()
        history.dev_bleu.append(bleu)
        logger.info("epoch %d: loss %.3f dev BLEU %.4f", epoch, epoch_loss, bleu)
        if bleu > best_bleu:
            best_bleu = bleu
            best_state = copy.deepcopy(model.state_dict())
            history.best_epoch = epoch
            evals_since_best = 0
        else:
            evals_since_best += 1
            if evals_since_best >= train.patience:
                history.stopped_early = True
                break
        if train.checkpoint_dir and (epoch + 1) % train.checkpoint_every == 0:
            save_checkpoint(model, Path(train.checkpoint_dir) / f"epoch{epoch:03d}.pt")

    model.load_state_dict(best_state)
    return model, history


def save_checkpoint(model: TranslationModel, path: str | Path) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "src_tokens": model.src_vocab.tokens(),
        "tgt_tokens": model.tgt_vocab.tokens(),
        "state_dict": model.state_dict(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> TranslationModel:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a model checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    config = ModelConfig(**payload["config"])
    model = TranslationModel(
        config, Vocabulary(payload["src_tokens"]), Vocabulary(payload["tgt_tokens"])
    )
    model.load_state_dict(payload["state_dict"])
    return model
