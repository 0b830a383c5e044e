"""Command-line entry points: subword learning, alignment training, model
training, stream adaptation runs, evaluation, and the live service.

Flag defaults can also come from a JSON config file (``--config``) whose keys
are the long flag names with dashes replaced by underscores; explicit flags
win.  The service port falls back to the ALIMT_PORT environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .alignment import (
    AlignerConfig,
    load_alignment_model,
    save_alignment_model,
    train_alignment,
)
from .bpe import learn_bpe, save_merge_table
from .data import StreamSource, load_parallel_corpus
from .engine import TranslationEngine
from .loop import ALConfig, export_curves, run_al
from .metrics import corpus_bleu_breakdown
from .model import TrainConfig
from .pipeline import train_engine
from .sampling import STRATEGIES, SamplingConfig
from .service import create_app, default_port

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alimt", description="stream adaptation workbench for interactive translation"
    )
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    parser.subcommands = {}  # name -> subparser, for config-file defaults

    p = sub.add_parser("bpe", help="learn subword merge rules from text")
    p.add_argument("--input", nargs="+", required=True, help="text files, one sentence per line")
    p.add_argument("--num-merges", type=int, default=1000)
    p.add_argument("--output", required=True, help="merge-table file to write")

    p = sub.add_parser("align", help="train the lexical alignment model")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--m1-iters", type=int, default=5)
    p.add_argument("--m2-iters", type=int, default=5)
    p.add_argument("--no-null", action="store_true", help="disable the empty source word")
    p.add_argument("--distortion", choices=["tension", "table"], default="tension")
    p.add_argument("--output", required=True)

    p = sub.add_parser("train", help="train the translation model")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--dev-source", required=True)
    p.add_argument("--dev-target", required=True)
    p.add_argument("--num-merges", type=int, default=1000)
    p.add_argument("--emb-dim", type=int, default=64)
    p.add_argument("--hidden-dim", type=int, default=64)
    p.add_argument("--decoder", choices=["gru", "clstm"], default="gru")
    p.add_argument("--max-target-len", type=int, default=50)
    p.add_argument("--dtype", choices=["float64", "float32"], default="float64")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=50)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True, help="engine directory to write")

    p = sub.add_parser("run-al", help="adaptive translation of a sentence stream")
    p.add_argument("--config", help="JSON config file with flag defaults")
    p.add_argument("--engine", required=True, help="engine directory")
    p.add_argument("--stream", required=True, help="source sentences, one per line")
    p.add_argument("--references", required=True, help="aligned references for the simulated user")
    p.add_argument("--alignment", help="alignment model file (needed for qes/qbc)")
    p.add_argument("--strategy", choices=STRATEGIES, default="ads")
    p.add_argument("--epsilon", type=float, default=0.3)
    p.add_argument("--block-size", type=int, default=500)
    p.add_argument("--beam", type=int, default=6)
    p.add_argument("--lr", type=float, default=0.0005)
    p.add_argument("--tau-w", type=float, default=0.4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strict-redecode", action="store_true")
    p.add_argument("--output-dir", required=True)

    p = sub.add_parser("eval", help="corpus BLEU of a hypothesis file")
    p.add_argument("--hypotheses", required=True)
    p.add_argument("--references", required=True)

    p = sub.add_parser("serve", help="run the live interactive translation service")
    p.add_argument("--config", help="JSON config file with flag defaults")
    p.add_argument("--engine", required=True)
    p.add_argument("--alignment")
    p.add_argument("--stream", help="optional stream file backing the queue view")
    p.add_argument("--strategy", choices=STRATEGIES, default="ads")
    p.add_argument("--epsilon", type=float, default=0.3)
    p.add_argument("--beam", type=int, default=6)
    p.add_argument("--lr", type=float, default=0.0005)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=None)

    for name, action in sub.choices.items():
        parser.subcommands[name] = action
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    """Load flag defaults from the JSON file named by --config; defaults land
    on the invoked subcommand's parser so explicit flags still win."""
    if "--config" not in argv or not argv:
        return
    config_path = argv[argv.index("--config") + 1]
    values = json.loads(Path(config_path).read_text(encoding="utf-8"))
    if not isinstance(values, dict):
        parser.error(f"{config_path}: config must be a JSON object")
    subparser = parser.subcommands.get(argv[0])
    if subparser is None:
        parser.error(f"--config given but {argv[0]!r} is not a subcommand")
    subparser.set_defaults(**{k.replace("-", "_"): v for k, v in values.items()})


def cmd_bpe(args) -> int:
    lines: list[str] = []
    for path in args.input:
        lines.extend(Path(path).read_text(encoding="utf-8").splitlines())
    table = learn_bpe([l for l in lines if l.strip()], args.num_merges)
    save_merge_table(table, args.output)
    print(f"learned {len(table)} merges -> {args.output}")
    return 0


def cmd_align(args) -> int:
    pairs = load_parallel_corpus(args.source, args.target)
    config = AlignerConfig(use_null=not args.no_null, distortion=args.distortion)
    model = train_alignment(pairs, args.m1_iters, args.m2_iters, config)
    save_alignment_model(model, args.output)
    print(
        f"trained alignment on {len(pairs)} pairs "
        f"(final log-likelihood {model.log_likelihood_history[-1]:.2f}) -> {args.output}"
    )
    return 0


def cmd_train(args) -> int:
    pairs = load_parallel_corpus(args.source, args.target)
    dev = load_parallel_corpus(args.dev_source, args.dev_target)
    from .pipeline import learn_joint_bpe

    table = learn_joint_bpe(pairs, args.num_merges)
    engine, history = train_engine(
        pairs,
        dev,
        table,
        emb_dim=args.emb_dim,
        hidden_dim=args.hidden_dim,
        decoder=args.decoder,
        max_target_len=args.max_target_len,
        dtype=args.dtype,
        train=TrainConfig(
            epochs=args.epochs,
            batch_size=args.batch_size,
            lr=args.lr,
            patience=args.patience,
        ),
        seed=args.seed,
    )
    engine.save(args.output)
    best = max(history.dev_bleu, default=0.0)
    print(f"trained model (best dev BLEU {100 * best:.2f}%) -> {args.output}")
    return 0


def cmd_run_al(args) -> int:
    engine = TranslationEngine.load(args.engine)
    references = Path(args.references).read_text(encoding="utf-8").splitlines()
    aligner = load_alignment_model(args.alignment) if args.alignment else None
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = ALConfig(
        epsilon=args.epsilon,
        strategy=args.strategy,
        block_size=args.block_size,
        beam=args.beam,
        incremental_lr=args.lr,
        tau_w=args.tau_w,
        seed=args.seed,
        strict_redecode=args.strict_redecode,
        checkpoint_dir=str(out_dir / "checkpoints"),
    )
    report = run_al(
        engine,
        StreamSource.from_file(args.stream),
        config,
        references=references,
        aligner=aligner,
        trace_path=out_dir / "trace.jsonl",
    )
    report.write_jsonl(out_dir / "report.jsonl")
    report.write_outputs(out_dir / "outputs.txt")
    export_curves([report], out_dir / "curves.csv")
    engine.save(out_dir / "final-engine")
    summary = report.summary()
    print(
        f"{summary['sentences']} sentences, {summary['supervised']} supervised | "
        f"initial BLEU {100 * summary['initial_bleu']:.2f}% | "
        f"KSMR {summary['ksmr']:.4f} -> {out_dir}"
    )
    return 0


def cmd_eval(args) -> int:
    hyps = Path(args.hypotheses).read_text(encoding="utf-8").splitlines()
    refs = Path(args.references).read_text(encoding="utf-8").splitlines()
    breakdown = corpus_bleu_breakdown(hyps, refs)
    precisions = " / ".join(f"{100 * p:.1f}" for p in breakdown.precisions)
    print(
        f"BLEU {100 * breakdown.score:.2f}% (precisions {precisions}, "
        f"BP {breakdown.brevity_penalty:.3f})"
    )
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    engine = TranslationEngine.load(args.engine)
    aligner = load_alignment_model(args.alignment) if args.alignment else None
    stream = StreamSource.from_file(args.stream) if args.stream else None
    sampling = SamplingConfig(strategy=args.strategy, epsilon=args.epsilon)
    app = create_app(
        engine,
        aligner=aligner,
        stream=stream,
        sampling=sampling,
        beam=args.beam,
        incremental_lr=args.lr,
    )
    port = args.port if args.port is not None else default_port()
    uvicorn.run(app, host=args.host, port=port)
    return 0


COMMANDS = {
    "bpe": cmd_bpe,
    "align": cmd_align,
    "train": cmd_train,
    "run-al": cmd_run_al,
    "eval": cmd_eval,
    "serve": cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    _apply_config_file(parser, argv)
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="[%(asctime)s] %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
