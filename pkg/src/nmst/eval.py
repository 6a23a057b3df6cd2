"""Perplexity, non-termination ratio r_nt(L), teacher-forced eos traces and
seed-pinned generation campaigns with JSON / CSV reports."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence as Seq

import numpy as np

from .core import ConditionalModel
from .decoding import DecoderSpec, GenerationEntry, decode, make_rng, spec_key
from .net.lm import RecurrentLM, corpus_nll, teacher_forced_log_probs

DEFAULT_THRESHOLDS = (10, 100, 1000, 10_000, 100_000)

RECORD_SCHEMA = {
    "type": "object",
    "required": ["model_id", "spec", "context_index", "context", "tokens", "length",
                 "terminated", "eos_probs"],
    "properties": {
        "model_id": {"type": "string"},
        "spec": {"type": "string"},
        "context_index": {"type": "integer", "minimum": 0},
        "context": {"type": "array", "items": {"type": "integer"}},
        "tokens": {"type": "array", "items": {"type": "integer"}},
        "length": {"type": "integer", "minimum": 0},
        "terminated": {"type": "boolean"},
        "eos_probs": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
        "score": {"type": "number"},
        "final_set_size": {"type": "integer", "minimum": 0},
    },
}

SUMMARY_SCHEMA = {
    "type": "object",
    "required": ["model_id", "perplexity", "cap", "thresholds", "r_nt", "counts", "seeds"],
    "properties": {
        "model_id": {"type": "string"},
        "perplexity": {"type": ["number", "null"]},
        "cap": {"type": "integer", "minimum": 1},
        "thresholds": {"type": "array", "items": {"type": "integer"}},
        "r_nt": {"type": "object", "additionalProperties": {
            "type": "object", "additionalProperties": {"type": "number", "minimum": 0, "maximum": 1}}},
        "counts": {"type": "object", "additionalProperties": {
            "type": "object", "required": ["contexts", "terminated", "max_length"]}},
        "seeds": {"type": "object", "required": ["master_seed"]},
    },
}


@dataclass
class GenerationReport:
    """Decoded continuations for a list of contexts under one decoder."""

    spec: DecoderSpec
    entries: list[GenerationEntry]
    contexts: list[tuple[int, ...]]
    model_id: str = "model"

    def __post_init__(self):
        if len(self.entries) != len(self.contexts):
            raise ValueError("one entry per context required")
        for e in self.entries:
            if e.length > self.spec.cap:
                raise ValueError(f"entry of length {e.length} exceeds cap {self.spec.cap}")

    def records(self) -> list[dict]:
        out = []
        for i, (ctx, e) in enumerate(zip(self.contexts, self.entries)):
            rec = {"model_id": self.model_id, "spec": str(self.spec), "context_index": i,
                   "context": list(ctx), "tokens": list(e.tokens), "length": e.length,
                   "terminated": e.terminated, "eos_probs": list(e.eos_probs), "score": e.score}
            if e.final_set is not None:
                rec["final_set_size"] = len(e.final_set)
            out.append(rec)
        return out

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for rec in self.records():
                f.write(json.dumps(rec) + "\n")


@dataclass
class MetricsRecord:
    perplexity: float | None
    r_nt: dict[str, dict[int, float]]
    counts: dict[str, dict[str, int]]
    seeds: dict[str, int]
    cap: int
    thresholds: tuple[int, ...]
    model_id: str = "model"

    def to_dict(self) -> dict:
        return {"model_id": self.model_id, "perplexity": self.perplexity, "cap": self.cap,
                "thresholds": list(self.thresholds),
                "r_nt": {s: {str(L): r for L, r in row.items()} for s, row in self.r_nt.items()},
                "counts": self.counts, "seeds": self.seeds}

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["spec", "L", "r_nt"])
            for s, row in self.r_nt.items():
                for L, r in row.items():
                    w.writerow([s, L, r])


def perplexity(model: ConditionalModel, dataset: Seq[tuple[Seq[int], Seq[int]]]) -> float:
    """exp(total continuation NLL / total continuation tokens)."""
    if not dataset:
        raise ValueError("empty dataset")
    eos = model.vocab.eos_id
    for _, y in dataset:
        if not y or y[-1] != eos:
            raise ValueError("every target must end with eos")
    nll, n = corpus_nll(model, list(dataset))
    return math.exp(nll / n) if nll / n < 700 else math.inf


def non_termination_ratio(report: GenerationReport | Seq[GenerationEntry],
                          thresholds: Iterable[int] = DEFAULT_THRESHOLDS,
                          cap: int | None = None) -> dict[int, float]:
    """Fraction of runs whose length exceeds each L; unterminated runs count
    as infinitely long."""
    if isinstance(report, GenerationReport):
        entries, cap = report.entries, report.spec.cap
    else:
        entries = list(report)
    thresholds = sorted(int(L) for L in thresholds)
    if cap is not None and thresholds and thresholds[-1] > cap:
        raise ValueError(f"threshold {thresholds[-1]} exceeds decoding cap {cap}")
    if not entries:
        raise ValueError("no generations")
    lengths = np.array([e.length if e.terminated else np.inf for e in entries])
    return {L: float(np.mean(lengths > L)) for L in thresholds}


def eos_trace(model: ConditionalModel, context: Seq[int], target: Seq[int]) -> np.ndarray:
    """p(eos | y_<t, x) for t = 1..|target| under teacher forcing."""
    eos = model.vocab.eos_id
    if not target or target[-1] != eos:
        raise ValueError("target must end with eos")
    if isinstance(model, RecurrentLM):
        lp = teacher_forced_log_probs(model, [(tuple(context), tuple(target))])[0]
        return np.exp(lp[:, eos])
    state = model.start(context)
    out = []
    for tok in target:
        dist, state = model.next_distribution(state)
        out.append(float(dist.probs[eos]))
        state = model.advance(state, tok)
    return np.array(out)


def run_campaign(model: ConditionalModel, contexts: Seq[Seq[int]], specs: Seq[DecoderSpec],
                 thresholds: Iterable[int] = DEFAULT_THRESHOLDS, master_seed: int = 0,
                 dataset=None, model_id: str = "model", out_dir: str | Path | None = None,
                 write_csv: bool = True) -> tuple[MetricsRecord, list[GenerationReport]]:
    """Decode every (context, spec) pair and aggregate r_nt per spec.

    Sampling runs use a generator keyed by (master_seed, context index, spec),
    so results do not depend on execution order.  With ``out_dir`` the
    reports are written as ``generations.jsonl``, ``summary.json`` and,
    optionally, ``r_nt.csv``.
    """
    thresholds = tuple(sorted(int(L) for L in thresholds))
    contexts = [tuple(int(t) for t in c) for c in contexts]
    caps = {s.cap for s in specs}
    if len(caps) != 1:
        raise ValueError("all specs in a campaign must share one cap")
    cap = caps.pop()
    if thresholds and thresholds[-1] > cap:
        raise ValueError(f"threshold {thresholds[-1]} exceeds decoding cap {cap}")
    reports, r_nt, counts = [], {}, {}
    for spec in specs:
        entries = [decode(model, ctx, spec, make_rng(master_seed, i, spec_key(spec)))
                   for i, ctx in enumerate(contexts)]
        rep = GenerationReport(spec, entries, contexts, model_id)
        reports.append(rep)
        r_nt[str(spec)] = non_termination_ratio(rep, thresholds)
        counts[str(spec)] = {"contexts": len(entries),
                             "terminated": sum(e.terminated for e in entries),
                             "max_length": max((e.length for e in entries), default=0)}
    ppl = perplexity(model, dataset) if dataset else None
    metrics = MetricsRecord(ppl, r_nt, counts, {"master_seed": int(master_seed)}, cap,
                            thresholds, model_id)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "generations.jsonl", "w", encoding="utf-8") as f:
            for rep in reports:
                for rec in rep.records():
                    f.write(json.dumps(rec) + "\n")
        (out / "summary.json").write_text(json.dumps(metrics.to_dict(), indent=2), encoding="utf-8")
        if write_csv:
            metrics.write_csv(out / "r_nt.csv")
    return metrics, reports
