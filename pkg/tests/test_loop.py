import json
from pathlib import Path

import numpy as np
import pytest

from alimt.data import Sentence, StreamSource
from alimt.loop import (
    ALConfig,
    ExperimentReport,
    export_curves,
    run_al,
    run_static_supervision,
)
from alimt.metrics import ksmr
from alimt.search import Hypothesis

from conftest import word_tokens


class DictEngine:
    """Word-for-word dictionary translator that memorizes supervised pairs.

    Unknown words are copied through (wrong against the reference), so
    adaptation has a visible effect without any neural machinery.
    """

    def __init__(self, lexicon=None):
        self.lexicon = dict(lexicon or {})
        self.updates = 0

    def tokenize(self, text):
        surface = text.surface if isinstance(text, Sentence) else " ".join(text.split())
        return Sentence(surface, word_tokens(surface))

    def _hyp(self, surface, n_src):
        words = surface.split()
        rows = np.full((len(words) + 1, max(n_src, 1)), 1.0 / max(n_src, 1))
        return Hypothesis(
            tokens=tuple(range(3, 3 + len(words))) + (1,),
            token_strings=word_tokens(surface),
            log_score=-1.0,
            attention=rows,
            surface=surface,
        )

    def translate(self, x, beam):
        words = x.surface.split()
        out = " ".join(self.lexicon.get(w, w) for w in words)
        return self._hyp(out, len(words))

    def constrained_suffix_search(self, x, prefix, beam):
        free = self.translate(x, beam).surface
        if free.startswith(prefix):
            out = free
        else:
            out = prefix + free[len(prefix) :]
        return self._hyp(out, len(x.surface.split()))

    def update(self, pair, lr):
        self.updates += 1
        if lr <= 0:
            return
        src, tgt = pair.source.surface.split(), pair.target.surface.split()
        for s, t in zip(src, tgt):
            self.lexicon[s] = t

    def save(self, directory):
        Path(directory).mkdir(parents=True, exist_ok=True)
        (Path(directory) / "lexicon.json").write_text(json.dumps(self.lexicon))


LEXICON = {"ka": "xa", "lo": "ye", "mi": "zu"}
STREAM = ["ka lo", "mi ka lo", "nu ka", "nu lo mi", "ka nu"]
REFS = [" ".join({**LEXICON, "nu": "qo"}.get(w, w) for w in s.split()) for s in STREAM]


def fresh_engine():
    return DictEngine(LEXICON)


def test_epsilon_zero_is_static_batch_translation():
    engine = fresh_engine()
    config = ALConfig(epsilon=0.0, strategy="ads", block_size=2, beam=1, seed=3)
    report = run_al(engine, StreamSource(STREAM), config, references=REFS)
    assert engine.updates == 0
    expected = [engine.translate(engine.tokenize(s), 1).surface for s in STREAM]
    assert report.outputs == expected
    assert report.initial_hypotheses == expected
    assert report.ledger.keystrokes == 0
    assert report.cumulative_ksmr == 0.0
    assert report.selected_indices == []


def test_epsilon_one_outputs_references_exactly():
    engine = fresh_engine()
    config = ALConfig(epsilon=1.0, strategy="ads", block_size=2, beam=1)
    report = run_al(engine, StreamSource(STREAM), config, references=REFS)
    assert report.outputs == REFS
    assert report.cumulative_output_bleu == pytest.approx(1.0)
    assert report.selected_indices == list(range(len(STREAM)))


def test_output_completeness_with_short_final_block():
    engine = fresh_engine()
    config = ALConfig(epsilon=0.5, strategy="rs", block_size=2, beam=1, seed=1)
    report = run_al(engine, StreamSource(STREAM), config, references=REFS)
    assert len(report.outputs) == len(STREAM)
    assert [b.size for b in report.blocks] == [2, 2, 1]
    assert [b.selected_count for b in report.blocks] == [1, 1, 1]


def test_references_required_when_supervising():
    with pytest.raises(ValueError):
        run_al(fresh_engine(), StreamSource(STREAM), ALConfig(epsilon=0.5))


def test_qes_requires_aligner():
    with pytest.raises(ValueError, match="alignment"):
        run_al(
            fresh_engine(),
            StreamSource(STREAM),
            ALConfig(epsilon=0.5, strategy="qes"),
            references=REFS,
        )


def test_update_ordering_strict_vs_snapshot():
    # Both sentences contain the unknown word; the first is supervised.
    stream = ["nu ka", "nu lo"]
    refs = ["qo xa", "qo ye"]
    base = dict(epsilon=0.5, strategy="ads", block_size=2, beam=1, seed=0)

    snap_report = run_al(
        DictEngine(LEXICON), StreamSource(stream), ALConfig(**base), references=refs
    )
    # Snapshot mode: the unsupervised sentence keeps its block-entry decode.
    assert snap_report.selected_indices == [0]
    assert snap_report.initial_hypotheses[1] == "nu ye"

    strict_report = run_al(
        DictEngine(LEXICON),
        StreamSource(stream),
        ALConfig(**base, strict_redecode=True),
        references=refs,
    )
    # Strict mode: sentence 1 is re-decoded after sentence 0's update.
    assert strict_report.selected_indices == [0]
    assert strict_report.initial_hypotheses[1] == "qo ye"
    assert strict_report.outputs[1] == "qo ye"


def test_adaptation_improves_outputs_and_reduces_effort():
    config = ALConfig(epsilon=0.4, strategy="rs", block_size=2, beam=1, seed=5)
    adaptive = run_al(
        DictEngine(LEXICON), StreamSource(STREAM), config, references=REFS
    )
    static = run_al(
        DictEngine(LEXICON),
        StreamSource(STREAM),
        ALConfig(epsilon=0.0, block_size=2, beam=1),
        references=REFS,
    )
    assert adaptive.cumulative_output_bleu >= static.cumulative_output_bleu
    replay = run_static_supervision(
        DictEngine(LEXICON), STREAM, REFS, adaptive.selected_indices, beam=1
    )
    assert (adaptive.ledger.keystrokes + adaptive.ledger.mouse_actions) <= (
        replay.keystrokes + replay.mouse_actions
    )


def test_report_reproducibility():
    config = ALConfig(epsilon=0.5, strategy="rs", block_size=2, beam=1, seed=11)
    r1 = run_al(DictEngine(LEXICON), StreamSource(STREAM), config, references=REFS)
    r2 = run_al(DictEngine(LEXICON), StreamSource(STREAM), config, references=REFS)
    assert r1.outputs == r2.outputs
    assert r1.selected_indices == r2.selected_indices
    assert [b.cumulative_ksmr for b in r1.blocks] == [b.cumulative_ksmr for b in r2.blocks]


def test_ledger_matches_cumulative_ksmr():
    config = ALConfig(epsilon=1.0, strategy="ads", block_size=3, beam=1)
    report = run_al(DictEngine(LEXICON), StreamSource(STREAM), config, references=REFS)
    assert report.cumulative_ksmr == pytest.approx(ksmr(report.ledger))
    assert report.ledger.reference_characters == sum(len(r) for r in REFS)


def test_report_jsonl_and_trace(tmp_path):
    config = ALConfig(epsilon=0.5, strategy="covs", block_size=2, beam=1)
    report = run_al(
        DictEngine(LEXICON),
        StreamSource(STREAM),
        config,
        references=REFS,
        trace_path=tmp_path / "trace.jsonl",
    )
    report.write_jsonl(tmp_path / "report.jsonl")
    report.write_outputs(tmp_path / "outputs.txt")

    lines = [
        json.loads(l) for l in (tmp_path / "report.jsonl").read_text().splitlines()
    ]
    assert [l["record"] for l in lines] == ["block"] * 3 + ["summary"]
    assert lines[-1]["sentences"] == len(STREAM)
    trace_rows = [
        json.loads(l) for l in (tmp_path / "trace.jsonl").read_text().splitlines()
    ]
    assert len(trace_rows) == len(STREAM)
    assert {r["record"] for r in trace_rows} == {"sentence"}
    assert sum(r["selected"] for r in trace_rows) == len(report.selected_indices)
    assert (tmp_path / "outputs.txt").read_text().splitlines() == report.outputs


def test_abort_flushes_checkpoint(tmp_path):
    class FailingEngine(DictEngine):
        def update(self, pair, lr):
            raise RuntimeError("boom")

    config = ALConfig(
        epsilon=1.0,
        strategy="ads",
        block_size=2,
        beam=1,
        checkpoint_dir=str(tmp_path / "ckpt"),
    )
    with pytest.raises(RuntimeError, match="boom"):
        run_al(FailingEngine(LEXICON), StreamSource(STREAM), config, references=REFS)
    assert (tmp_path / "ckpt" / "aborted" / "lexicon.json").exists()


def test_export_curves(tmp_path):
    config = ALConfig(epsilon=0.5, strategy="rs", block_size=2, beam=1)
    report = run_al(DictEngine(LEXICON), StreamSource(STREAM), config, references=REFS)
    path = tmp_path / "curves.csv"
    export_curves([report], path)
    rows = path.read_text().splitlines()
    assert rows[0] == "strategy,epsilon,percent_supervised,bleu_percent,ksmr"
    assert rows[1].startswith("rs,0.5,50.0,")
