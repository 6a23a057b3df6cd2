"""Command-line entry point: ``nmst {train,generate,eval,verify,witness}``.

Exit codes: 0 success, 1 failed check or aborted run, 2 usage error.
The default output directory comes from ``$NMST_OUTPUT_DIR`` (else ``runs``).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import asdict
from pathlib import Path

from .checkpoint import CheckpointError, ModelCheckpoint
from .core import VocabularyError, decode as decode_ids, detokenize, encode, tokenize
from .data import make_examples, prepare_corpus, read_corpus
from .decoding import DecoderSpec, DecoderSpecError, decode, make_rng, spec_key
from .eval import DEFAULT_THRESHOLDS, GenerationReport, run_campaign
from .net.backbone import Architecture
from .net.lm import HeadSpec
from .net.train import TrainConfig, TrainingDiverged, train
from .verify import SUITES, build_vanilla_nontermination_witness, run_suite

OUTPUT_ENV = "NMST_OUTPUT_DIR"
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("nmst")


class UsageError(Exception):
    pass


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "runs"))


def _fractions(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad split {text!r}") from None


def _thresholds(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(float(x)) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad thresholds {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nmst", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="fit a model on a text corpus")
    t.add_argument("--corpus", required=True, type=Path)
    t.add_argument("--tokenizer", choices=("char", "word"), default="char")
    t.add_argument("--head", choices=("va", "st", "nmst"), required=True)
    t.add_argument("--eps", type=float, default=None)
    t.add_argument("--cell", choices=("rnn", "lstm"), default="rnn")
    t.add_argument("--hidden", type=int, default=64)
    t.add_argument("--layers", type=int, default=1)
    t.add_argument("--no-tie", action="store_true", help="separate input and output embeddings")
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--max-epochs", type=int, default=70)
    t.add_argument("--patience", type=int, default=10)
    t.add_argument("--lr-decay", type=float, default=0.5)
    t.add_argument("--weight-decay", type=float, default=0.01)
    t.add_argument("--dropout", type=float, default=0.0)
    t.add_argument("--clip", type=float, default=1.0)
    t.add_argument("--context-length", type=int, default=10)
    t.add_argument("--split", type=_fractions, default=(0.8, 0.1, 0.1))
    t.add_argument("--min-freq", type=int, default=1)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", type=Path, default=None)

    g = sub.add_parser("generate", help="decode continuations of contexts")
    g.add_argument("--ckpt", required=True, type=Path)
    g.add_argument("--contexts", required=True, type=Path, help="one context per line")
    g.add_argument("--spec", required=True)
    g.add_argument("--cap", type=int, default=1000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", type=Path, default=None, help="JSON-lines file (default stdout)")

    e = sub.add_parser("eval", help="perplexity and non-termination ratios")
    e.add_argument("--ckpt", required=True, type=Path)
    e.add_argument("--corpus", required=True, type=Path)
    e.add_argument("--specs", default="greedy", help="comma-separated decoder specs")
    e.add_argument("--thresholds", type=_thresholds, default=DEFAULT_THRESHOLDS)
    e.add_argument("--cap", type=int, default=None, help="default: largest threshold")
    e.add_argument("--context-length", type=int, default=None, help="default: value used in training")
    e.add_argument("--max-contexts", type=int, default=None)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--csv", action="store_true", help="also write r_nt.csv")
    e.add_argument("--out", type=Path, default=None)

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("--suite", choices=SUITES, required=True)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--trials", type=int, default=None)
    v.add_argument("--out", type=Path, default=None)

    w = sub.add_parser("witness", help="write the non-terminating vanilla model as a checkpoint")
    w.add_argument("--vocab-size", type=int, default=3)
    w.add_argument("--out", type=Path, required=True)
    return p


def _out_dir(path: Path | None, name: str) -> Path:
    out = path if path is not None else default_output_dir() / name
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args) -> int:
    if args.head == "va" and args.eps is not None:
        raise UsageError("--eps is meaningless for --head va")
    if args.head != "va" and args.eps is None:
        raise UsageError(f"--head {args.head} needs --eps")
    try:
        head = HeadSpec(args.head, args.eps)
        cfg = TrainConfig(learning_rate=args.lr, batch_size=args.batch_size, max_epochs=args.max_epochs,
                          patience=args.patience, lr_decay=args.lr_decay, weight_decay=args.weight_decay,
                          dropout_prob=args.dropout, seed=args.seed, context_length=args.context_length,
                          clip_norm=args.clip)
        if not args.corpus.is_file():
            raise UsageError(f"corpus {args.corpus} not found")
        lines = read_corpus(args.corpus, args.tokenizer)
        vocab, (tr, va, _) = prepare_corpus(lines, args.context_length, args.split, args.seed, args.min_freq)
        arch = Architecture(args.cell, len(vocab), args.hidden, args.layers, not args.no_tie)
    except (ValueError, VocabularyError) as exc:
        raise UsageError(str(exc)) from None
    if not tr or not va:
        raise UsageError("train or validation split is empty after context splitting")
    try:
        result = train(tr, va, vocab, arch, head, cfg)
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_FAIL
    out = _out_dir(args.out, "train")
    meta = {"tokenizer": args.tokenizer, "context_length": args.context_length, "train_config": cfg.to_dict(),
            "best_epoch": result.best_epoch, "split": list(args.split), "min_freq": args.min_freq}
    ModelCheckpoint.from_model(result.model, meta).save(out / "model.ckpt")
    metrics = {"config": cfg.to_dict(), "architecture": arch.to_dict(), "head": head.to_dict(),
               "vocab_size": len(vocab), "train_examples": len(tr), "valid_examples": len(va),
               "best_epoch": result.best_epoch, "best_valid_ppl": result.best_valid_ppl,
               "epochs": [{k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in asdict(m).items()}
                          for m in result.history]}
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2, allow_nan=False), encoding="utf-8")
    print(json.dumps({"checkpoint": str(out / "model.ckpt"), "best_valid_ppl": result.best_valid_ppl}))
    return EXIT_OK


def _load(path: Path) -> ModelCheckpoint:
    if not path.is_file():
        raise UsageError(f"checkpoint {path} not found")
    try:
        return ModelCheckpoint.load(path)
    except CheckpointError as exc:
        raise UsageError(f"cannot load {path}: {exc}") from None


def _spec(text: str, cap: int, seed: int) -> DecoderSpec:
    try:
        return DecoderSpec.parse(text, cap=cap, seed=seed)
    except DecoderSpecError as exc:
        raise UsageError(str(exc)) from None


def cmd_generate(args) -> int:
    ckpt = _load(args.ckpt)
    spec = _spec(args.spec, args.cap, args.seed)
    mode = ckpt.metadata.get("tokenizer", "char")
    if not args.contexts.is_file():
        raise UsageError(f"contexts file {args.contexts} not found")
    lines = args.contexts.read_text(encoding="utf-8").splitlines()
    try:
        contexts = [encode(ckpt.vocab, tokenize(line, mode)).token_ids for line in lines]
    except VocabularyError as exc:
        raise UsageError(str(exc)) from None
    model = ckpt.to_model()
    entries = [decode(model, ctx, spec, make_rng(args.seed, i, spec_key(spec))) for i, ctx in enumerate(contexts)]
    report = GenerationReport(spec, entries, [tuple(c) for c in contexts], args.ckpt.name)
    records = report.records()
    for rec in records:
        rec["text"] = detokenize(decode_ids(ckpt.vocab, rec["tokens"]), mode)
    text = "".join(json.dumps(r) + "\n" for r in records)
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text, encoding="utf-8")
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt = _load(args.ckpt)
    thresholds = tuple(sorted(args.thresholds))
    cap = args.cap if args.cap is not None else thresholds[-1]
    if thresholds[-1] > cap:
        raise UsageError(f"threshold {thresholds[-1]} exceeds cap {cap}")
    specs = [_spec(s, cap, args.seed) for s in args.specs.split(",")]
    mode = ckpt.metadata.get("tokenizer", "char")
    c = args.context_length if args.context_length is not None else ckpt.metadata.get("context_length", 0)
    if not args.corpus.is_file():
        raise UsageError(f"corpus {args.corpus} not found")
    try:
        examples = make_examples(read_corpus(args.corpus, mode), ckpt.vocab, c)
    except VocabularyError as exc:
        raise UsageError(str(exc)) from None
    if not examples:
        raise UsageError("no usable lines in corpus")
    if args.max_contexts is not None:
        examples = examples[:args.max_contexts]
    out = _out_dir(args.out, "eval")
    metrics, _ = run_campaign(ckpt.to_model(), [ctx for ctx, _ in examples], specs, thresholds, args.seed,
                              dataset=examples, model_id=args.ckpt.name, out_dir=out, write_csv=args.csv)
    print(json.dumps(metrics.to_dict()))
    return EXIT_OK


def cmd_verify(args) -> int:
    res = run_suite(args.suite, args.seed, args.trials)
    text = res.to_json(indent=2)
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text, encoding="utf-8")
    for chk in res.checks:
        print(f"{'PASS' if chk.passed else 'FAIL'} {chk.name}")
    print(f"suite {res.name}: {'PASS' if res.passed else 'FAIL'} ({res.seconds:.1f}s)")
    return EXIT_OK if res.passed else EXIT_FAIL


def cmd_witness(args) -> int:
    if args.vocab_size < 2:
        raise UsageError("--vocab-size must be at least 2")
    w = build_vanilla_nontermination_witness(args.vocab_size)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    ModelCheckpoint.from_model(w.model, {"claim": w.claim, "context_length": 0, "tokenizer": "word"}).save(args.out)
    return EXIT_OK


COMMANDS = {"train": cmd_train, "generate": cmd_generate, "eval": cmd_eval, "verify": cmd_verify,
            "witness": cmd_witness}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"nmst {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
