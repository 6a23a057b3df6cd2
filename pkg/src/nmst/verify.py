"""Executable checks: decoder axioms, an inconsistent vanilla model, NMST/ST
termination sweeps, decoder-oracle equivalence and the two-sequence
non-monotone eos experiment.  Every check is seeded and reports diagnostics."""

from __future__ import annotations

import json
import math
import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence as Seq

import numpy as np
from scipy import stats

from . import heads
from .core import ConditionalDistribution, ConditionalModel, Vocabulary, random_table_model, validate_distribution
from .decoding import (DecoderSpec, decode_beam, decode_greedy, decode_sampling,
                       enumerate_decoder_distribution, make_rng, probability_order, sample_many,
                       spec_key, step_support)
from .eval import eos_trace
from .heads import HeadKind, HeadParams, HeadState, half_life
from .net.backbone import Architecture
from .net.lm import HeadSpec, RecurrentLM
from .net.train import TrainConfig, train

SUITES = ("heads", "decoders", "consistency", "two_sequence", "all")
AXIOM_SPECS = ("greedy", "top-k:1", "top-k:2", "top-k:4", "nucleus:0.2", "nucleus:0.4", "nucleus:1.0")
CAMPAIGN_SPECS = ("greedy", "top-k:2", "top-k:4", "nucleus:0.2", "nucleus:0.4", "beam:2", "beam:4")
CONSISTENCY_EPS = (1e-5, 5e-5, 1e-4, 5e-4, 0.1)
SAMPLING_MARGIN = 64


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seed: int | None = None


@dataclass
class SuiteResult:
    name: str
    checks: list[CheckResult] = field(default_factory=list)
    artifacts: dict = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, passed: bool, seed: int | None = None, **details) -> CheckResult:
        c = CheckResult(name, bool(passed), details, seed)
        self.checks.append(c)
        return c

    def extend(self, other: "SuiteResult") -> "SuiteResult":
        self.checks.extend(other.checks)
        self.artifacts.update(other.artifacts)
        return self

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {"suite": self.name, "passed": self.passed, "seconds": self.seconds,
                "checks": [asdict(c) for c in self.checks], "artifacts": self.artifacts}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), default=_jsonable, **kw)


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x)}")


def _timed(fn: Callable[..., SuiteResult]) -> Callable[..., SuiteResult]:
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res
    wrapper.__name__, wrapper.__doc__ = fn.__name__, fn.__doc__
    return wrapper


# ---------------------------------------------------------------- random inputs

def random_distribution(rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Mixture of Dirichlet draws, near-ties (gaps ~1e-15), exact ties,
    point masses and vectors with zeros."""
    n = int(size or rng.integers(2, 65))
    mode = rng.integers(6)
    if mode == 0:
        p = np.full(n, 1.0 / n) + rng.uniform(-1e-15, 1e-15, n)
    elif mode == 1:
        p = np.zeros(n)
        p[rng.integers(n)] = 1.0
    elif mode == 2:
        p = rng.dirichlet(np.full(n, 0.3))
        p[rng.random(n) < 0.3] = 0.0
        if p.sum() == 0:
            p[0] = 1.0
    elif mode == 3:
        vals = rng.dirichlet(np.ones(max(2, n // 3)))
        p = vals[rng.integers(len(vals), size=n)]
    else:
        p = rng.dirichlet(np.full(n, 10.0 ** rng.uniform(-2, 1)))
    p = np.maximum(p, 0.0)
    return p / p.sum()


def random_recurrent_model(head: HeadSpec, rng: np.random.Generator, vocab_size: int = 6,
                           hidden_size: int = 8) -> RecurrentLM:
    """Small randomly weighted network; cell type, tying and weight scale vary."""
    arch = Architecture(str(rng.choice(["rnn", "lstm"])), vocab_size, hidden_size,
                        tie_weights=bool(rng.random() < 0.5))
    return RecurrentLM.init(Vocabulary.of_size(vocab_size), arch, head, rng,
                            scale=float(rng.uniform(0.3, 3.0)))


def constant_hidden_model(head: HeadSpec, eos_logit: float, vocab_size: int = 6,
                          lead: float = 8.0) -> RecurrentLM:
    """Network whose hidden state is the same at every step (zero input and
    recurrent weights), eos logit ``eos_logit`` and token 1 leading the
    non-eos tokens by ``lead`` nats."""
    arch = Architecture("rnn", vocab_size, hidden_size=1, tie_weights=False)
    params = {"embedding": np.zeros((vocab_size, 1)), "rnn0.w_x": np.zeros((1, 1)),
              "rnn0.w_h": np.zeros((1, 1)), "rnn0.b": np.array([math.atanh(0.5)]),
              "output": np.zeros((vocab_size, 1))}
    params["output"][0, 0] = 2.0 * eos_logit
    params["output"][1, 0] = 2.0 * lead
    return RecurrentLM(Vocabulary.of_size(vocab_size), arch, head, params)


# ---------------------------------------------------------------- heads

@_timed
def check_heads(trials: int = 10_000, seed: int = 0, st_steps: int = 6) -> SuiteResult:
    """Random (weights, eps, t): normalization of all heads, the NMST lower
    bound, alpha < 1 for NMST, and monotone ST traces."""
    res = SuiteResult("heads")
    rng = make_rng(seed, 101)
    worst_norm, worst_lb = 0.0, 0.0
    bad = Counter()
    for _ in range(trials):
        V, m = int(rng.integers(2, 20)), int(rng.integers(1, 16))
        emb = rng.normal(0, 10.0 ** rng.uniform(-1, 1), (V, m))
        eps = float(10.0 ** rng.uniform(-6, -0.05))
        t = int(10.0 ** rng.uniform(0, 4))
        h = rng.normal(0, 3.0, m)
        va = heads.va_head(h, HeadParams(emb, HeadKind.VA))
        nm = heads.nmst_head(h, HeadParams(emb, HeadKind.NMST, eps), t)
        p_st = HeadParams(emb, HeadKind.ST, eps)
        state, prev, dists = HeadState(), -1.0, [va, nm]
        for _ in range(st_steps):
            d, state = heads.st_head(rng.normal(0, 3.0, m), p_st, state)
            dists.append(d)
            alpha = float(d.probs[0])
            bad["st_monotone"] += alpha < prev
            prev = alpha
        for d in dists:
            chk = validate_distribution(d)
            worst_norm = max(worst_norm, chk.normalization_error)
            bad["normalization"] += not chk.ok
        gap = heads.eos_lower_bound(eps, t) - float(nm.probs[0])
        worst_lb = max(worst_lb, gap)
        bad["nmst_lower_bound"] += gap > 1e-12
        # 1 - alpha can round to 0 in linear space; its log must stay finite
        bad["nmst_below_one"] += not np.isfinite(np.logaddexp.reduce(nm.log_probs[1:]))
    res.add("normalization", bad["normalization"] == 0, seed, trials=trials,
            violations=bad["normalization"], max_normalization_error=worst_norm)
    res.add("nmst_lower_bound", bad["nmst_lower_bound"] == 0, seed,
            violations=bad["nmst_lower_bound"], max_shortfall=worst_lb)
    res.add("nmst_alpha_below_one", bad["nmst_below_one"] == 0, seed, violations=bad["nmst_below_one"])
    res.add("st_monotone", bad["st_monotone"] == 0, seed, violations=bad["st_monotone"])

    # alpha_2 < alpha_1: sigma large then small, small eps
    p = HeadParams(np.array([[1.0], [0.0]]), HeadKind.NMST, 1e-3)
    a1 = float(heads.nmst_head(np.array([4.0]), p, 1).probs[0])
    a2 = float(heads.nmst_head(np.array([-4.0]), p, 2).probs[0])
    res.add("nmst_can_decrease", a2 < a1, alpha_1=a1, alpha_2=a2)
    return res


# ---------------------------------------------------------------- decoder axioms

@_timed
def check_incomplete_probable(spec: DecoderSpec | str, trials: int = 10_000, seed: int = 0,
                              atol: float = 1e-9) -> SuiteResult:
    """Fuzz the three conditions on V_t and q: q sums to one on V_t, every
    kept probability is at least every dropped one, and q >= p on V_t."""
    spec = DecoderSpec.parse(spec) if isinstance(spec, str) else spec
    res = SuiteResult(f"incomplete_probable[{spec}]")
    rng = make_rng(seed, spec_key(spec))
    bad = Counter()
    full_support = 0
    for _ in range(trials):
        p = random_distribution(rng)
        sup = step_support(ConditionalDistribution.from_probs(p), spec)
        kept = np.zeros(len(p), dtype=bool)
        kept[sup.kept_ids] = True
        bad["sum_to_one"] += abs(sup.probs.sum() - 1.0) > atol
        if (~kept).any():
            bad["kept_dominate_dropped"] += p[kept].min() < p[~kept].max()
        else:
            full_support += 1
        bad["no_deflation"] += bool(np.any(sup.probs < p[kept]))
        if p.max() > 0.5:
            eos = int(np.argmax(p))
            bad["majority_kept"] += not kept[eos] or sup.probs[sup.kept_ids == eos][0] < p[eos]
        if spec.kind == "nucleus" and kept.sum() > 1:
            cum = np.cumsum(p[probability_order(p)])
            bad["nucleus_minimal"] += cum[kept.sum() - 2] >= min(spec.mu, cum[-1])
    for name in ("sum_to_one", "kept_dominate_dropped", "no_deflation", "majority_kept"):
        res.add(name, bad[name] == 0, seed, violations=bad[name], trials=trials)
    if spec.kind == "nucleus":
        res.add("nucleus_minimal", bad["nucleus_minimal"] == 0, seed, violations=bad["nucleus_minimal"])
    res.artifacts[f"{spec}:not_proper_subset"] = full_support
    return res


def brute_force_beam(model: ConditionalModel, context: Seq[int], k: int, cap: int
                     ) -> tuple[tuple[int, ...], list[tuple[int, ...]]]:
    """Reference beam search that recomputes every prefix from scratch and
    expands the whole vocabulary before filtering to each prefix's top k."""
    eos, V = model.vocab.eos_id, len(model.vocab)
    active: list[tuple[int, ...]] = [()]
    final: list[tuple[float, tuple[int, ...]]] = []
    for _ in range(cap):
        cands = []
        for prefix in active:
            dist, _ = model.step(context, prefix)
            own = sorted(range(V), key=lambda v: (-dist.probs[v], v))[:k]
            for v in own:
                seq = prefix + (v,)
                cands.append((model.sequence_log_prob(context, seq), seq))
        cands.sort(key=lambda c: (-c[0], c[1]))
        finished = [c for c in cands[:k] if c[1][-1] == eos]
        final.extend(finished[:k - len(final)])
        active = [c[1] for c in cands if c[1][-1] != eos][:k]
        if len(final) >= k or not active:
            break
    pool = list(final)
    if len(final) < k and active:
        pool.append((model.sequence_log_prob(context, active[0]), active[0]))
    pool.sort(key=lambda c: (-c[0], c[1]))
    return pool[0][1], [s for _, s in sorted(final, key=lambda c: (-c[0], c[1]))]


def chi_square_against(counts: Counter, probs: dict, n: int, min_expected: float = 5.0
                       ) -> tuple[float, float, int]:
    """Pearson test of observed counts against exact probabilities; cells with
    expected count below ``min_expected`` are pooled.  Returns (stat, p, dof)."""
    unexpected = sum(c for s, c in counts.items() if s not in probs)
    if unexpected:
        return math.inf, 0.0, 0
    obs, exp = [], []
    pool_o, pool_e = 0, 0.0
    for seq, q in probs.items():
        e = n * q
        if e < min_expected:
            pool_o += counts.get(seq, 0)
            pool_e += e
        else:
            obs.append(counts.get(seq, 0))
            exp.append(e)
    if pool_e > 0:
        obs.append(pool_o)
        exp.append(pool_e)
    if len(obs) < 2:
        return 0.0, 1.0, 0
    exp = np.array(exp) * (sum(obs) / sum(exp))
    stat, p = stats.chisquare(obs, exp)
    return float(stat), float(p), len(obs) - 1


@_timed
def check_oracle_equivalence(models: int = 50, samples: int = 100_000, seed: int = 0,
                             max_vocab: int = 5, max_depth: int = 6,
                             alpha: float = 1e-3) -> SuiteResult:
    """Random table models: enumerated decoder distributions sum to one,
    seeded sampling matches them (chi-square), and beam search agrees with
    the brute-force reference."""
    res = SuiteResult("oracle_equivalence")
    rng = make_rng(seed, 202)
    sample_specs = ("top-k:2", "top-k:3", "nucleus:0.4", "nucleus:0.8", "nucleus:1.0")
    worst_mass, min_p, beam_mismatch, pvals = 0.0, 1.0, [], []
    for i in range(models):
        V, depth = int(rng.integers(2, max_vocab + 1)), int(rng.integers(1, max_depth + 1))
        model = random_table_model(V, depth, rng, concentration=float(rng.uniform(0.3, 2.0)))
        max_len = depth + 1
        for s in ("greedy",) + sample_specs:
            q, residual = enumerate_decoder_distribution(model, (), DecoderSpec.parse(s, cap=max_len), max_len)
            worst_mass = max(worst_mass, abs(sum(q.values()) + residual - 1.0))
        spec = DecoderSpec.parse(sample_specs[i % len(sample_specs)], cap=max_len)
        q, _ = enumerate_decoder_distribution(model, (), spec, max_len)
        runs = sample_many(model, (), spec, samples, make_rng(seed, i, spec_key(spec)))
        _, p, dof = chi_square_against(Counter(r.tokens for r in runs), q, samples)
        pvals.append(p)
        min_p = min(min_p, p)
        for k in (1, 2, 3):
            got = decode_beam(model, (), k, max_len)
            ref, ref_final = brute_force_beam(model, (), k, max_len)
            if got.tokens != ref or [s for s, _ in got.final_set] != ref_final:
                beam_mismatch.append({"model": i, "k": k, "beam": got.tokens, "reference": ref})
    res.add("enumeration_mass", worst_mass <= 1e-9, seed, max_error=worst_mass, models=models)
    res.add("monte_carlo_chi_square", min_p > alpha, seed, min_p_value=min_p, samples=samples,
            failing=int(sum(p <= alpha for p in pvals)))
    res.add("beam_matches_reference", not beam_mismatch, seed, mismatches=beam_mismatch[:5])
    return res


# ---------------------------------------------------------------- witnesses

@dataclass
class WitnessModel:
    model: ConditionalModel
    claim: str
    verifier: Callable[["WitnessModel", int], CheckResult]

    def verify(self, cap: int = 100_000) -> CheckResult:
        return self.verifier(self, cap)


def _verify_vanilla_witness(w: WitnessModel, cap: int) -> CheckResult:
    model, eos = w.model, w.model.vocab.eos_id
    worst_margin = -math.inf
    state = model.start(())
    # the hidden state is reachable-state independent only by construction; check every step
    for t in range(cap):
        dist, state = model.next_distribution(state)
        tok = int(np.argmax(dist.probs))
        worst_margin = max(worst_margin, float(dist.probs[eos]) - float(np.delete(dist.probs, eos).max()))
        if tok == eos:
            return CheckResult("vanilla_witness", False, {"claim": w.claim, "terminated_at": t + 1})
        state = model.advance(state, tok)
    return CheckResult("vanilla_witness", worst_margin < 0,
                       {"claim": w.claim, "cap": cap, "greedy_length": cap, "terminated": False,
                        "max_eos_minus_top": worst_margin})


def build_vanilla_nontermination_witness(vocab_size: int = 3) -> WitnessModel:
    """VA network with p(eos) below the top non-eos probability at every
    reachable state, so greedy (and any decoder keeping only the top token)
    never emits eos."""
    if vocab_size < 2:
        raise ValueError("vocab_size must be at least 2")
    model = constant_hidden_model(HeadSpec("va"), eos_logit=0.0, vocab_size=vocab_size, lead=1.0)
    return WitnessModel(model, "greedy decoding never emits eos", _verify_vanilla_witness)


@_timed
def check_vanilla_witness(vocab_size: int = 3, cap: int = 100_000,
                          side_cap: int = 10_000) -> SuiteResult:
    from .eval import non_termination_ratio
    res = SuiteResult("vanilla_witness")
    w = build_vanilla_nontermination_witness(vocab_size)
    c = w.verify(cap)
    res.checks.append(c)
    greedy = decode_greedy(w.model, (), cap)
    ratios = non_termination_ratio([greedy], [L for L in (10, 100, 1000, 10_000, 100_000) if L <= cap], cap)
    res.add("greedy_r_nt_one", all(r == 1.0 for r in ratios.values()), r_nt=ratios)
    top1 = decode_sampling(w.model, (), DecoderSpec("top_k", k=1, cap=side_cap), make_rng(0))
    res.add("top1_matches_greedy", top1.tokens == greedy.tokens[:side_cap] and not top1.terminated)
    dist, _ = w.model.step((), ())
    mu = float(np.delete(dist.probs, w.model.vocab.eos_id).max())
    nuc = decode_sampling(w.model, (), DecoderSpec("nucleus", mu=mu, cap=side_cap), make_rng(0))
    res.add("nucleus_never_keeps_eos", not nuc.terminated, mu=mu, length=nuc.length)
    return res


# ---------------------------------------------------------------- consistency

def _decoder_specs(cap: int) -> list[DecoderSpec]:
    return [DecoderSpec.parse(s, cap=cap) for s in CAMPAIGN_SPECS]


def _bound(spec: DecoderSpec, t_half: int) -> int:
    if spec.kind == "greedy":
        return t_half
    if spec.kind == "beam":
        return t_half + spec.k
    return t_half + SAMPLING_MARGIN


def _lengths(spec: DecoderSpec, model, ctx, rng) -> list[tuple[int, bool]]:
    """(length, terminated) of the returned sequence, plus, for beam search,
    every member of the final set."""
    if spec.kind == "greedy":
        e = decode_greedy(model, ctx, spec.cap)
    elif spec.kind == "beam":
        e = decode_beam(model, ctx, spec.k, spec.cap)
        return [(e.length, e.terminated)] + [(len(s), True) for s, _ in e.final_set]
    else:
        e = decode_sampling(model, ctx, spec, rng)
    return [(e.length, e.terminated)]


@_timed
def check_nmst_consistency(eps_list: Seq[float] = CONSISTENCY_EPS, trials: int = 1000, seed: int = 0,
                           adversarial: int = 1, vocab_size: int = 6) -> SuiteResult:
    """Random NMST networks: greedy length <= t_half, beam final lengths <=
    t_half + k, sampled lengths <= t_half + 64.  ``adversarial`` extra models
    per eps keep sigma ~ 0 so alpha follows the lower-bound curve."""
    res = SuiteResult("nmst_consistency")
    for eps in eps_list:
        t_half = half_life(eps)
        cap = t_half + SAMPLING_MARGIN + 1
        specs = _decoder_specs(cap)
        rng = make_rng(seed, 303, int(round(-1e3 * math.log10(eps))))
        worst = {str(s): 0 for s in specs}
        violations = []
        models = [(random_recurrent_model(HeadSpec("nmst", eps), rng, vocab_size),
                   tuple(int(x) for x in rng.integers(1, vocab_size, size=3))) for _ in range(trials)]
        models += [(constant_hidden_model(HeadSpec("nmst", eps), -40.0, vocab_size), (1,))] * adversarial
        for i, (model, ctx) in enumerate(models):
            for spec in specs:
                for length, term in _lengths(spec, model, ctx, make_rng(seed, i, spec_key(spec))):
                    worst[str(spec)] = max(worst[str(spec)], length)
                    if not term or length > _bound(spec, t_half):
                        violations.append({"model": i, "spec": str(spec), "length": length,
                                           "terminated": term})
        res.add(f"eps={eps:g}", not violations, seed, t_half=t_half, cap=cap, models=len(models),
                max_length=worst, bounds={str(s): _bound(s, t_half) for s in specs},
                violations=violations[:5])
    return res


@_timed
def check_st_consistency(eps_list: Seq[float] = (0.5, 0.1, 1e-3), trials: int = 1000, seed: int = 0,
                         cap: int = 10_000, adversarial: int = 1, vocab_size: int = 6) -> SuiteResult:
    """Random ST networks: every decoder terminates before ``cap``.

    Per model the empirical half-life is the first greedy step with
    alpha > 1/2 (or the greedy length if shorter); lengths beyond it + 64
    are counted for information only.  The
    adversarial model keeps sigma ~ 1, the slowest the head allows.
    """
    res = SuiteResult("st_consistency")
    for eps in eps_list:
        specs = _decoder_specs(cap)
        rng = make_rng(seed, 404, int(round(-1e3 * math.log10(eps))))
        worst = {str(s): 0 for s in specs}
        failures, beyond, max_hl = [], 0, 0
        models = [(random_recurrent_model(HeadSpec("st", eps), rng, vocab_size),
                   tuple(int(x) for x in rng.integers(1, vocab_size, size=3))) for _ in range(trials)]
        models += [(constant_hidden_model(HeadSpec("st", eps), 40.0, vocab_size), (1,))] * adversarial
        for i, (model, ctx) in enumerate(models):
            g = decode_greedy(model, ctx, cap)
            # greedy may stop before alpha passes 1/2 (eos already the argmax)
            hl = next((t + 1 for t, a in enumerate(g.eos_probs) if a > 0.5), g.length)
            max_hl = max(max_hl, hl)
            for spec in specs:
                for length, term in _lengths(spec, model, ctx, make_rng(seed, i, spec_key(spec))):
                    worst[str(spec)] = max(worst[str(spec)], length)
                    if not term:
                        failures.append({"model": i, "spec": str(spec)})
                    elif length > hl + SAMPLING_MARGIN + (spec.k or 0):
                        beyond += 1
        res.add(f"eps={eps:g}", not failures, seed, cap=cap, models=len(models), max_length=worst,
                max_empirical_half_life=max_hl, lengths_beyond_empirical_bound=beyond,
                weight_free_half_life=half_life(eps), nonterminated=failures[:5])
    return res


# ---------------------------------------------------------------- two-sequence experiment

@dataclass(frozen=True)
class TwoSequenceConfig:
    """Two sequences sharing a prefix: one ends at step t0, the other runs to
    ``length``.  The likelihood optimum puts alpha = 1/2 at t0, 0 before and
    right after it, and 1 at the last step."""

    t0: int = 4
    length: int = 7
    epsilon: float = 1e-3
    cell: str = "rnn"
    hidden_size: int = 16
    learning_rate: float = 1e-2
    max_epochs: int = 1500
    patience: int = 100
    seed: int = 0
    band: float = 0.1

    def __post_init__(self):
        if not 1 < self.t0 < self.length:
            raise ValueError("need 1 < t0 < length")


def two_sequence_data(cfg: TwoSequenceConfig) -> tuple[Vocabulary, list[tuple[tuple, tuple]]]:
    vocab = Vocabulary(("<eos>",) + tuple(f"w{i}" for i in range(1, cfg.length)))
    body = tuple(range(1, cfg.length))
    return vocab, [((), body[:cfg.t0 - 1] + (0,)), ((), body + (0,))]


def two_sequence_experiment(head_kind: HeadKind | str, cfg: TwoSequenceConfig = TwoSequenceConfig()) -> SuiteResult:
    """Train one head on the two-sequence data (full batch, train = valid) and
    check the learned teacher-forced eos trace along the longer sequence."""
    kind = HeadKind(head_kind)
    res = SuiteResult(f"two_sequence[{kind.value}]")
    vocab, data = two_sequence_data(cfg)
    head = HeadSpec(kind, None if kind is HeadKind.VA else cfg.epsilon)
    tcfg = TrainConfig(learning_rate=cfg.learning_rate, batch_size=len(data), max_epochs=cfg.max_epochs,
                       patience=cfg.patience, lr_decay=1.0, weight_decay=0.0, seed=cfg.seed,
                       context_length=0)
    t_start = time.perf_counter()
    try:
        out = train(data, data, vocab, Architecture(cfg.cell, len(vocab), cfg.hidden_size), head, tcfg)
    except RuntimeError as exc:
        res.add("training", False, cfg.seed, error=str(exc))
        return res
    trace = eos_trace(out.model, (), data[1][1])
    nll = sum(-out.model.sequence_log_prob(c, y) for c, y in data)
    optimum = 2.0 * math.log(2.0)
    t0 = cfg.t0
    res.artifacts[kind.value] = {"trace": trace.tolist(), "nll": nll, "optimal_nll": optimum,
                                 "epochs": len(out.history) - 1, "seconds": time.perf_counter() - t_start}
    if kind is HeadKind.ST:
        res.add("st_trace_monotone", bool(np.all(np.diff(trace) >= 0)), cfg.seed, nll=nll)
    else:
        res.add("alpha_t0_near_half", abs(trace[t0 - 1] - 0.5) <= cfg.band, cfg.seed, alpha_t0=trace[t0 - 1])
        res.add("alpha_after_t0_small", trace[t0] <= cfg.band, cfg.seed, alpha_t0_plus_1=trace[t0])
        res.add("alpha_before_t0_small", bool(np.all(trace[:t0 - 1] <= cfg.band)), cfg.seed,
                alpha_before=trace[:t0 - 1].tolist())
    return res


@_timed
def two_sequence_suite(cfg: TwoSequenceConfig = TwoSequenceConfig()) -> SuiteResult:
    res = SuiteResult("two_sequence")
    for kind in HeadKind:
        res.extend(two_sequence_experiment(kind, cfg))
    arts = res.artifacts
    if all(k in arts for k in ("nmst", "st")):
        nm, st = arts["nmst"], arts["st"]
        res.add("st_nll_exceeds_nmst", st["nll"] > nm["nll"], cfg.seed, st_nll=st["nll"], nmst_nll=nm["nll"])
        res.add("nmst_trace_non_monotone", nm["trace"][cfg.t0 - 1] > nm["trace"][cfg.t0], cfg.seed)
    return res


# ---------------------------------------------------------------- suites

def run_suite(name: str, seed: int = 0, trials: int | None = None) -> SuiteResult:
    """Named suite; ``trials`` scales the fuzzing / sweep sizes."""
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {SUITES}")
    t0 = time.perf_counter()
    res = SuiteResult(name)
    if name in ("heads", "all"):
        res.extend(check_heads(trials or 10_000, seed))
    if name in ("decoders", "all"):
        for s in AXIOM_SPECS + ("top-k:64",):
            res.extend(check_incomplete_probable(s, trials or 10_000, seed))
        res.extend(check_oracle_equivalence(models=min(trials or 50, 50), seed=seed))
    if name in ("consistency", "all"):
        res.extend(check_vanilla_witness())
        res.extend(check_nmst_consistency(trials=trials or 100, seed=seed))
        res.extend(check_st_consistency(trials=trials or 100, seed=seed))
    if name in ("two_sequence", "all"):
        res.extend(two_sequence_suite(TwoSequenceConfig(seed=seed)))
    res.seconds = time.perf_counter() - t0
    return res
