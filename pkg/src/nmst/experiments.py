"""Desk-scale experiments shared by the acceptance tests and ``scripts/``:
a VA / ST / NMST training comparison on the synthetic corpus and a
multi-decoder non-termination campaign."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence as Seq

import numpy as np

from .core import ConditionalModel, Vocabulary
from .data import prepare_corpus, synthetic_corpus
from .decoding import DecoderSpec, make_rng
from .eval import MetricsRecord, run_campaign
from .heads import HeadKind, half_life
from .net.backbone import Architecture
from .net.lm import HeadSpec, RecurrentLM
from .net.train import EpochMetrics, TrainConfig, train
from .verify import CAMPAIGN_SPECS, SAMPLING_MARGIN, SuiteResult, random_recurrent_model


@dataclass(frozen=True)
class ScaledConfig:
    """One budget shared by every head."""

    lines: int = 600
    corpus_seed: int = 0
    context_length: int = 3
    cell: str = "lstm"
    hidden_size: int = 64
    learning_rate: float = 3e-3
    batch_size: int = 32
    max_epochs: int = 70
    patience: int = 10
    epsilon: float = 1e-4
    seed: int = 0
    rnt_threshold: int = 10_000
    ppl_tolerance: float = 0.05

    def train_config(self) -> TrainConfig:
        return TrainConfig(learning_rate=self.learning_rate, batch_size=self.batch_size,
                           max_epochs=self.max_epochs, patience=self.patience, seed=self.seed,
                           context_length=self.context_length)


@dataclass
class HeadRun:
    kind: str
    model: RecurrentLM
    valid_ppl: float
    best_epoch: int
    history: list[EpochMetrics]
    seconds: float

    def summary(self) -> dict:
        return {"kind": self.kind, "valid_ppl": self.valid_ppl, "best_epoch": self.best_epoch,
                "epochs": len(self.history) - 1, "seconds": self.seconds}


@dataclass
class ScaledResult:
    config: ScaledConfig
    vocab: Vocabulary
    splits: list[list]
    runs: dict[str, HeadRun] = field(default_factory=dict)
    nmst_r_nt: dict[int, float] = field(default_factory=dict)

    def checks(self) -> SuiteResult:
        cfg = self.config
        res = SuiteResult("scaled_comparison")
        va, nm, st = (self.runs[k].valid_ppl for k in ("va", "nmst", "st"))
        res.add("nmst_ppl_within_tolerance_of_va", abs(nm - va) <= cfg.ppl_tolerance * va, cfg.seed,
                va_ppl=va, nmst_ppl=nm, relative_gap=(nm - va) / va)
        res.add("nmst_greedy_r_nt_zero", self.nmst_r_nt.get(cfg.rnt_threshold) == 0.0, cfg.seed,
                r_nt=self.nmst_r_nt, contexts=len(self.splits[1]))
        res.add("st_ppl_not_below_nmst", st >= nm, cfg.seed, st_ppl=st, nmst_ppl=nm)
        res.artifacts = {"config": asdict(cfg), "vocab_size": len(self.vocab),
                         "split_sizes": [len(p) for p in self.splits],
                         "runs": {k: r.summary() for k, r in self.runs.items()}}
        return res


def scaled_data(cfg: ScaledConfig) -> tuple[Vocabulary, list[list]]:
    lines = [line.split() for line in synthetic_corpus(cfg.lines, seed=cfg.corpus_seed)]
    return prepare_corpus(lines, cfg.context_length, (0.8, 0.1, 0.1), seed=cfg.corpus_seed)


def train_head(kind: str, cfg: ScaledConfig, vocab: Vocabulary, splits: list[list]) -> HeadRun:
    head = HeadSpec(kind, None if kind == "va" else cfg.epsilon)
    arch = Architecture(cfg.cell, len(vocab), cfg.hidden_size)
    t0 = time.perf_counter()
    out = train(splits[0], splits[1], vocab, arch, head, cfg.train_config())
    return HeadRun(kind, out.model, out.best_valid_ppl, out.best_epoch, out.history,
                   time.perf_counter() - t0)


def scaled_comparison(cfg: ScaledConfig = ScaledConfig(), kinds: Seq[str] = ("va", "nmst", "st")
                      ) -> ScaledResult:
    """Train each head with the same data, seed and budget, then decode the
    NMST model greedily from every validation context."""
    vocab, splits = scaled_data(cfg)
    result = ScaledResult(cfg, vocab, splits)
    for kind in kinds:
        result.runs[kind] = train_head(kind, cfg, vocab, splits)
    if "nmst" in result.runs:
        spec = DecoderSpec.parse("greedy", cap=cfg.rnt_threshold)
        metrics, _ = run_campaign(result.runs["nmst"].model, [c for c, _ in splits[1]], [spec],
                                  thresholds=(cfg.rnt_threshold,), model_id="nmst")
        result.nmst_r_nt = metrics.r_nt["greedy"]
    return result


@dataclass
class CampaignEntry:
    model_id: str
    model: ConditionalModel
    contexts: list[tuple[int, ...]]

    @property
    def epsilon(self) -> float:
        return self.model.head.epsilon


def random_campaign_entries(eps_list: Seq[float], per_eps: int, contexts: int = 100, seed: int = 0,
                            vocab_size: int = 6, context_length: int = 3) -> list[CampaignEntry]:
    """Random NMST networks, each with its own random contexts."""
    out = []
    for eps in eps_list:
        rng = make_rng(seed, 909, int(round(-1e3 * np.log10(eps))))
        for i in range(per_eps):
            model = random_recurrent_model(HeadSpec(HeadKind.NMST, eps), rng, vocab_size)
            ctxs = [tuple(int(x) for x in rng.integers(1, vocab_size, size=context_length))
                    for _ in range(contexts)]
            out.append(CampaignEntry(f"random-eps{eps:g}-{i}", model, ctxs))
    return out


def nmst_campaign(entries: Seq[CampaignEntry], specs: Seq[str] = CAMPAIGN_SPECS, master_seed: int = 0,
                  out_dir: str | Path | None = None) -> tuple[SuiteResult, dict[str, MetricsRecord]]:
    """Decode every entry under every spec with cap L = t_half + 64 and check
    r_nt(L) = 0.  Each model writes its reports under ``out_dir/<model_id>``."""
    t0 = time.perf_counter()
    res = SuiteResult("nmst_campaign")
    records = {}
    for e in entries:
        if e.model.head.kind is not HeadKind.NMST:
            raise ValueError(f"{e.model_id} is not an NMST model")
        L = half_life(e.epsilon) + SAMPLING_MARGIN
        decs = [DecoderSpec.parse(s, cap=L) for s in specs]
        metrics, _ = run_campaign(e.model, e.contexts, decs, thresholds=(L,), master_seed=master_seed,
                                  model_id=e.model_id,
                                  out_dir=None if out_dir is None else Path(out_dir) / e.model_id)
        records[e.model_id] = metrics
        worst = {s: row[L] for s, row in metrics.r_nt.items()}
        res.add(e.model_id, all(r == 0.0 for r in worst.values()), master_seed, epsilon=e.epsilon, L=L,
                r_nt=worst, max_length={s: c["max_length"] for s, c in metrics.counts.items()},
                contexts=len(e.contexts))
    res.seconds = time.perf_counter() - t0
    return res, records
