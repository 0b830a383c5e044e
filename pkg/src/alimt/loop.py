"""Stream adaptation loop: block retrieval, sampling, interactive supervision
of the selected subset, automatic translation of the rest, and incremental
model updates, with per-block quality/effort reporting.

Per block, every sentence is decoded once on the block-entry snapshot; those
hypotheses feed the sampling strategies and serve as the outputs of the
unsupervised sentences.  Supervised sentences are re-decoded at their turn on
the current (possibly already updated) model, interactively corrected, and
immediately used for one SGD step.  A strict mode re-decodes every sentence
at its turn instead.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .alignment import AlignmentModel
from .data import ParallelPair, Sentence, StreamSource, get_block_from_stream
from .engine import TranslationEngine
from .metrics import EffortConvention, EffortLedger, corpus_bleu, ksmr
from .sampling import SamplingConfig, score_and_select
from .session import inmt_session

logger = logging.getLogger(__name__)

REPORT_VERSION = 1


@dataclass(frozen=True)
class ALConfig:
    epsilon: float
    strategy: str = "ads"
    block_size: int = 500
    beam: int = 6
    incremental_lr: float = 0.0005
    tau_w: float = 0.4
    seed: int = 0
    strict_redecode: bool = False
    coverage_flip: bool = False
    skip_adjacent_positioning: bool = False
    checkpoint_every_blocks: int = 10
    checkpoint_dir: str | None = None

    def sampling(self) -> SamplingConfig:
        return SamplingConfig(
            strategy=self.strategy,
            epsilon=self.epsilon,
            tau_w=self.tau_w,
            seed=self.seed,
            coverage_flip=self.coverage_flip,
        )


@dataclass
class BlockRecord:
    block_index: int
    stream_offset: int
    size: int
    selected_count: int
    selected_indices: list[int]
    block_initial_bleu: float
    cumulative_initial_bleu: float
    block_output_bleu: float
    cumulative_output_bleu: float
    cumulative_keystrokes: int
    cumulative_mouse_actions: int
    cumulative_reference_characters: int
    cumulative_ksmr: float


@dataclass
class ExperimentReport:
    config: ALConfig
    blocks: list[BlockRecord] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    initial_hypotheses: list[str] = field(default_factory=list)
    references: list[str] = field(default_factory=list)
    selected_indices: list[int] = field(default_factory=list)
    ledger: EffortLedger = field(default_factory=EffortLedger)

    @property
    def cumulative_initial_bleu(self) -> float:
        if not self.references:
            return 0.0
        return corpus_bleu(self.initial_hypotheses, self.references)

    @property
    def cumulative_output_bleu(self) -> float:
        if not self.references:
            return 0.0
        return corpus_bleu(self.outputs, self.references)

    @property
    def cumulative_ksmr(self) -> float:
        if self.ledger.reference_characters == 0:
            return 0.0
        return ksmr(self.ledger)

    def summary(self) -> dict:
        return {
            "record": "summary",
            "version": REPORT_VERSION,
            "strategy": self.config.strategy,
            "epsilon": self.config.epsilon,
            "sentences": len(self.outputs),
            "supervised": len(self.selected_indices),
            "initial_bleu": self.cumulative_initial_bleu,
            "output_bleu": self.cumulative_output_bleu,
            "keystrokes": self.ledger.keystrokes,
            "mouse_actions": self.ledger.mouse_actions,
            "reference_characters": self.ledger.reference_characters,
            "ksmr": self.cumulative_ksmr,
        }

    def write_jsonl(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for block in self.blocks:
                row = {"record": "block", "version": REPORT_VERSION}
                row.update(asdict(block))
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")
            fh.write(json.dumps(self.summary(), ensure_ascii=False) + "\n")

    def write_outputs(self, path: str | Path) -> None:
        Path(path).write_text(
            "".join(line + "\n" for line in self.outputs), encoding="utf-8"
        )


def export_curves(reports: list[ExperimentReport], path: str | Path) -> None:
    """CSV of curve points: supervision percentage vs BLEU and KSMR vs BLEU,
    one row per run (BLEU printed as a percentage)."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["strategy", "epsilon", "percent_supervised", "bleu_percent", "ksmr"]
        )
        for report in reports:
            writer.writerow(
                [
                    report.config.strategy,
                    report.config.epsilon,
                    100.0 * report.config.epsilon,
                    100.0 * report.cumulative_initial_bleu,
                    report.cumulative_ksmr,
                ]
            )


def run_al(
    engine: TranslationEngine,
    stream: StreamSource,
    config: ALConfig,
    references: list[str] | None = None,
    aligner: AlignmentModel | None = None,
    trace_path: str | Path | None = None,
) -> ExperimentReport:
    """Adaptive translation of a stream with simulated supervision.

    ``references`` must align with the stream by index when any sentence can
    be selected (epsilon > 0).  Deterministic given the config seed.
    """
    if config.epsilon > 0 and references is None:
        raise ValueError("simulated supervision requires references")
    if config.strategy in ("qes", "qbc") and aligner is None:
        raise ValueError(f"strategy {config.strategy!r} requires an alignment model")
    rng = np.random.default_rng(config.seed)
    convention = EffortConvention(config.skip_adjacent_positioning)
    sampling_cfg = config.sampling()
    report = ExperimentReport(config=config)
    trace_fh = Path(trace_path).open("w", encoding="utf-8") if trace_path else None

    block_index = 0
    try:
        while (block := get_block_from_stream(stream, config.block_size)) is not None:
            _run_block(
                engine,
                block,
                block_index,
                config,
                sampling_cfg,
                references,
                aligner,
                rng,
                convention,
                report,
                trace_fh,
            )
            block_index += 1
            if (
                config.checkpoint_dir
                and block_index % config.checkpoint_every_blocks == 0
            ):
                engine.save(Path(config.checkpoint_dir) / f"block{block_index:05d}")
    except Exception:
        if config.checkpoint_dir:
            engine.save(Path(config.checkpoint_dir) / "aborted")
        if trace_fh:
            trace_fh.close()
            trace_fh = None
        raise
    finally:
        if trace_fh:
            trace_fh.close()
    return report


def _run_block(
    engine,
    block,
    block_index,
    config: ALConfig,
    sampling_cfg: SamplingConfig,
    references,
    aligner,
    rng,
    convention,
    report: ExperimentReport,
    trace_fh,
) -> None:
    sentences = [engine.tokenize(s) for s in block.sentences]
    indices = [block.stream_offset + k for k in range(len(sentences))]
    snapshot = [engine.translate(x, config.beam) for x in sentences]

    scored, selected = score_and_select(
        list(zip(indices, sentences, snapshot)), sampling_cfg, aligner, rng
    )
    selected_set = {s.index for s in selected}

    initial_surfaces: list[str] = []
    output_surfaces: list[str] = []
    for k, (idx, x) in enumerate(zip(indices, sentences)):
        if idx in selected_set:
            initial = engine.translate(x, config.beam)
            _, trace = inmt_session(
                engine,
                x,
                reference=references[idx],
                beam=config.beam,
                convention=convention,
                initial_hypothesis=initial,
            )
            engine.update(
                ParallelPair(x, Sentence(trace.final)), config.incremental_lr
            )
            report.ledger = report.ledger + trace.ledger
            initial_surfaces.append(initial.surface)
            output_surfaces.append(trace.final)
        else:
            hyp = engine.translate(x, config.beam) if config.strict_redecode else snapshot[k]
            initial_surfaces.append(hyp.surface)
            output_surfaces.append(hyp.surface)
        if trace_fh:
            trace_fh.write(
                json.dumps(
                    {
                        "record": "sentence",
                        "index": idx,
                        "strategy": sampling_cfg.strategy,
                        "score": scored[k].uncertainty,
                        "selected": idx in selected_set,
                        "source": x.surface,
                        "initial": initial_surfaces[-1],
                        "output": output_surfaces[-1],
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )

    report.outputs.extend(output_surfaces)
    report.initial_hypotheses.extend(initial_surfaces)
    report.selected_indices.extend(sorted(selected_set))
    block_refs = (
        [references[i] for i in indices] if references is not None else output_surfaces
    )
    report.references.extend(block_refs)
    report.blocks.append(
        BlockRecord(
            block_index=block_index,
            stream_offset=block.stream_offset,
            size=len(sentences),
            selected_count=len(selected_set),
            selected_indices=sorted(selected_set),
            block_initial_bleu=corpus_bleu(initial_surfaces, block_refs),
            cumulative_initial_bleu=report.cumulative_initial_bleu,
            block_output_bleu=corpus_bleu(output_surfaces, block_refs),
            cumulative_output_bleu=report.cumulative_output_bleu,
            cumulative_keystrokes=report.ledger.keystrokes,
            cumulative_mouse_actions=report.ledger.mouse_actions,
            cumulative_reference_characters=report.ledger.reference_characters,
            cumulative_ksmr=report.cumulative_ksmr,
        )
    )
    logger.info(
        "block %d: %d sentences, %d supervised, BLEU %.4f (cum %.4f), KSMR %.4f",
        block_index,
        len(sentences),
        len(selected_set),
        report.blocks[-1].block_initial_bleu,
        report.cumulative_initial_bleu,
        report.cumulative_ksmr,
    )


def run_static_supervision(
    engine: TranslationEngine,
    sources: list[str],
    references: list[str],
    indices: list[int],
    beam: int = 6,
    convention: EffortConvention = EffortConvention(),
) -> EffortLedger:
    """Effort of interactively translating the given stream indices with a
    frozen model (no updates): the no-adaptation effort baseline."""
    total = EffortLedger()
    for idx in indices:
        x = engine.tokenize(sources[idx])
        _, trace = inmt_session(
            engine, x, reference=references[idx], beam=beam, convention=convention
        )
        total = total + trace.ledger
    return total
