"""Greedy search, top-k and nucleus sampling, beam search, and exhaustive
oracles (decoder-induced distribution, MAP sequence) for small models.

Tie-breaking is by ascending token id everywhere; beam candidates with equal
score are ordered by their token-id sequence.
"""

from __future__ import annotations

import re
import zlib
from dataclasses import dataclass
from typing import Sequence as Seq

import numpy as np

from .core import ConditionalDistribution, ConditionalModel, Sequence

KINDS = ("greedy", "top_k", "nucleus", "beam")
MAX_ENUM_VOCAB = 8
MAX_ENUM_LEN = 8


class DecoderSpecError(ValueError):
    pass


@dataclass(frozen=True)
class DecoderSpec:
    kind: str
    k: int | None = None
    mu: float | None = None
    cap: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DecoderSpecError(f"unknown decoder kind {self.kind!r}")
        if self.kind in ("top_k", "beam") and (self.k is None or self.k < 1):
            raise DecoderSpecError(f"{self.kind} needs k >= 1, got {self.k}")
        if self.kind == "nucleus" and (self.mu is None or not 0.0 < self.mu <= 1.0):
            raise DecoderSpecError(f"nucleus needs mu in (0, 1], got {self.mu}")
        if self.cap < 1:
            raise DecoderSpecError("cap must be at least 1")

    @classmethod
    def parse(cls, text: str, cap: int = 1000, seed: int = 0) -> "DecoderSpec":
        """``greedy``, ``top-k:K``, ``nucleus:MU`` or ``beam:K``."""
        text = text.strip()
        if text == "greedy":
            return cls("greedy", cap=cap, seed=seed)
        m = re.fullmatch(r"(top-k|beam):(-?\d+)", text)
        if m:
            kind = "top_k" if m.group(1) == "top-k" else "beam"
            return cls(kind, k=int(m.group(2)), cap=cap, seed=seed)
        m = re.fullmatch(r"nucleus:([0-9.eE+-]+)", text)
        if m:
            try:
                mu = float(m.group(1))
            except ValueError:
                raise DecoderSpecError(f"bad nucleus threshold in {text!r}") from None
            return cls("nucleus", mu=mu, cap=cap, seed=seed)
        raise DecoderSpecError(f"cannot parse decoder spec {text!r}")

    def __str__(self) -> str:
        if self.kind == "greedy":
            return "greedy"
        if self.kind == "nucleus":
            return f"nucleus:{self.mu:g}"
        return f"{'top-k' if self.kind == 'top_k' else 'beam'}:{self.k}"

    def with_cap(self, cap: int) -> "DecoderSpec":
        return DecoderSpec(self.kind, self.k, self.mu, cap, self.seed)


def make_rng(*keys: int) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by integers."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in keys])))


def spec_key(spec: DecoderSpec) -> int:
    return zlib.crc32(str(spec).encode())


@dataclass(frozen=True)
class StepSupport:
    """Candidate set V_t (ascending ids) and the renormalized q over it."""

    kept_ids: np.ndarray
    probs: np.ndarray

    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.probs)
        return c / c[-1]


def probability_order(probs: np.ndarray) -> np.ndarray:
    """Token ids by descending probability, ascending id among ties."""
    return np.lexsort((np.arange(len(probs)), -probs))


def step_support(d: ConditionalDistribution, spec: DecoderSpec) -> StepSupport:
    p = np.asarray(d.probs, dtype=np.float64)
    order = probability_order(p)
    if spec.kind == "greedy":
        n = 1
    elif spec.kind == "top_k":
        n = min(spec.k, len(p))
    elif spec.kind == "nucleus":
        cum = np.cumsum(p[order])
        # total may fall short of 1 by rounding; then the whole positive mass is kept
        n = min(int(np.searchsorted(cum, min(spec.mu, cum[-1]), side="left")) + 1, len(p))
    else:
        raise DecoderSpecError(f"{spec.kind} has no per-step support")
    kept = np.sort(order[:n])
    mass = min(float(p[kept].sum()), 1.0)
    return StepSupport(kept, p[kept] / mass)


@dataclass(frozen=True)
class GenerationEntry:
    """One decoded continuation; ``eos_probs[i]`` is p(eos) at step i+1."""

    tokens: tuple[int, ...]
    terminated: bool
    eos_probs: tuple[float, ...]
    score: float = 0.0
    final_set: tuple[tuple[tuple[int, ...], float], ...] | None = None

    @property
    def length(self) -> int:
        return len(self.tokens)

    def sequence(self, eos_id: int) -> Sequence:
        return Sequence(self.tokens, eos_id)


def decode_greedy(model: ConditionalModel, context: Seq[int], cap: int) -> GenerationEntry:
    if cap < 1:
        raise ValueError("cap must be at least 1")
    eos = model.vocab.eos_id
    state = model.start(context)
    tokens, trace, score = [], [], 0.0
    for _ in range(cap):
        dist, state = model.next_distribution(state)
        tok = int(np.argmax(dist.probs))
        tokens.append(tok)
        trace.append(float(dist.probs[eos]))
        score += float(dist.log_probs[tok])
        if tok == eos:
            return GenerationEntry(tuple(tokens), True, tuple(trace), score)
        state = model.advance(state, tok)
    return GenerationEntry(tuple(tokens), False, tuple(trace), score)


class _TrieNode:
    """Prefix shared by one or more sampling runs; evaluated at most once."""

    __slots__ = ("parent", "token", "state", "children", "step")

    def __init__(self, parent, token, state):
        self.parent, self.token, self.state = parent, token, state
        self.children: dict[int, _TrieNode] = {}
        self.step = None

    def tokens(self) -> tuple[int, ...]:
        out, node = [], self
        while node.parent is not None:
            out.append(node.token)
            node = node.parent
        return tuple(reversed(out))


def sample_many(model: ConditionalModel, context: Seq[int], spec: DecoderSpec, n: int,
                rng: np.random.Generator) -> list[GenerationEntry]:
    """``n`` independent runs of top-k / nucleus sampling advanced in lockstep.

    Runs sharing a prefix share one model evaluation.  At each step every
    active run draws one uniform (in run order) and picks the first kept id,
    in id order, whose cumulative q exceeds it.
    """
    if spec.kind not in ("top_k", "nucleus", "greedy"):
        raise DecoderSpecError(f"cannot sample with {spec.kind}")
    if n < 1:
        raise ValueError("n must be at least 1")
    eos = model.vocab.eos_id
    root = _TrieNode(None, -1, model.start(context))

    def evaluate(node: _TrieNode):
        if node.step is None:
            dist, after = model.next_distribution(node.state)
            sup = step_support(dist, spec)
            node.state = after
            node.step = (sup.kept_ids, sup.cdf(), float(dist.probs[eos]), dist.log_probs)
        return node.step

    nodes = [root] * n
    traces = [[] for _ in range(n)]
    scores = np.zeros(n)
    done = np.zeros(n, dtype=bool)
    for _ in range(spec.cap):
        active = np.flatnonzero(~done)
        if active.size == 0:
            break
        u = rng.random(active.size)
        groups: dict[int, list[int]] = {}
        for j, r in enumerate(active.tolist()):
            groups.setdefault(id(nodes[r]), []).append(j)
        for js in groups.values():
            node = nodes[active[js[0]]]
            kept, cdf, p_eos, logp = evaluate(node)
            picks = kept[np.searchsorted(cdf, u[js], side="right")].tolist()
            for j, tok in zip(js, picks):
                r = active[j]
                child = node.children.get(tok)
                if child is None:
                    state = None if tok == eos else model.advance(node.state, tok)
                    child = node.children[tok] = _TrieNode(node, tok, state)
                nodes[r] = child
                traces[r].append(p_eos)
                scores[r] += logp[tok]
                done[r] = tok == eos
    return [GenerationEntry(nodes[r].tokens(), bool(done[r]), tuple(traces[r]), float(scores[r]))
            for r in range(n)]


def decode_sampling(model: ConditionalModel, context: Seq[int], spec: DecoderSpec,
                    rng: np.random.Generator | None = None) -> GenerationEntry:
    if rng is None:
        rng = make_rng(spec.seed)
    return sample_many(model, context, spec, 1, rng)[0]


@dataclass
class _Node:
    """Beam prefix stored as a parent-linked list so extending is O(1).

    ``lex`` is the rank of the prefix in lexicographic order among the beam
    it belongs to; candidates of one round compare lexicographically by
    (parent lex, token) without walking back to the root.
    """

    parent: "_Node | None"
    token: int
    p_eos: float
    score: float
    state: object = None
    lex: int = 0

    def unwind(self) -> tuple[tuple[int, ...], tuple[float, ...]]:
        tokens, trace, node = [], [], self
        while node.parent is not None:
            tokens.append(node.token)
            trace.append(node.p_eos)
            node = node.parent
        return tuple(reversed(tokens)), tuple(reversed(trace))


def _best_first(nodes: list[_Node]) -> list[_Node]:
    """Score descending, then token sequence ascending (any lengths)."""
    return sorted(nodes, key=lambda n: (-n.score, n.unwind()[0]))


def decode_beam(model: ConditionalModel, context: Seq[int], k: int, cap: int) -> GenerationEntry:
    """Beam search of width k.

    Each round every active prefix proposes its k most probable next tokens.
    Candidates are ranked by (score desc, token sequence asc); finished ones
    ranked within the top k enter the final set, and the k best unfinished
    candidates form the next beam.  Stops when the final set holds k
    sequences or after ``cap`` tokens; in the latter case the best unfinished
    prefix also competes and is returned unterminated if it wins.
    """
    if k < 1 or cap < 1:
        raise ValueError("k and cap must be at least 1")
    eos = model.vocab.eos_id
    beam = [_Node(None, -1, 0.0, 0.0, model.start(context))]
    final: list[_Node] = []
    for _ in range(cap):
        cands = []
        for node in beam:
            dist, state = model.next_distribution(node.state)
            p_eos = float(dist.probs[eos])
            for v in probability_order(dist.probs)[:k].tolist():
                cands.append(_Node(node, v, p_eos, node.score + float(dist.log_probs[v]), state))
        cands.sort(key=lambda n: (-n.score, n.parent.lex, n.token))
        beam = []
        for rank, c in enumerate(cands):
            if c.token == eos:
                if rank < k and len(final) < k:
                    final.append(c)
            elif len(beam) < k:
                beam.append(c)
        if len(final) >= k or not beam:
            break
        for i, c in enumerate(sorted(beam, key=lambda n: (n.parent.lex, n.token))):
            c.lex = i
        for c in beam:
            c.state = model.advance(c.state, c.token)
    pool = final + ([beam[0]] if len(final) < k and beam else [])
    best = _best_first(pool)[0]
    tokens, trace = best.unwind()
    final_set = tuple((n.unwind()[0], n.score) for n in _best_first(final))
    return GenerationEntry(tokens, best.token == eos, trace, best.score, final_set)


def decode(model: ConditionalModel, context: Seq[int], spec: DecoderSpec,
           rng: np.random.Generator | None = None) -> GenerationEntry:
    if spec.kind == "greedy":
        return decode_greedy(model, context, spec.cap)
    if spec.kind == "beam":
        return decode_beam(model, context, spec.k, spec.cap)
    return decode_sampling(model, context, spec, rng)


def _check_limits(model: ConditionalModel, max_len: int):
    if len(model.vocab) > MAX_ENUM_VOCAB or not 1 <= max_len <= MAX_ENUM_LEN:
        raise ValueError(f"enumeration limited to |V| <= {MAX_ENUM_VOCAB} and 1 <= max_len <= {MAX_ENUM_LEN}")


def enumerate_decoder_distribution(model: ConditionalModel, context: Seq[int], spec: DecoderSpec,
                                   max_len: int) -> tuple[dict[tuple[int, ...], float], float]:
    """Exact decoder-induced probabilities of every terminated sequence of
    length <= max_len, plus the residual mass of longer ones."""
    _check_limits(model, max_len)
    if spec.kind not in ("greedy", "top_k", "nucleus"):
        raise DecoderSpecError(f"cannot enumerate {spec.kind}")
    eos = model.vocab.eos_id
    out: dict[tuple[int, ...], float] = {}
    residual = 0.0
    stack = [((), model.start(context), 1.0)]
    while stack:
        prefix, state, mass = stack.pop()
        dist, state = model.next_distribution(state)
        sup = step_support(dist, spec)
        for v, q in zip(sup.kept_ids.tolist(), sup.probs.tolist()):
            m = mass * q
            if m == 0.0:
                continue
            seq = prefix + (v,)
            if v == eos:
                out[seq] = m
            elif len(seq) == max_len:
                residual += m
            else:
                stack.append((seq, model.advance(state, v), m))
    return out, residual


def map_oracle(model: ConditionalModel, context: Seq[int], max_len: int
               ) -> tuple[tuple[int, ...], float]:
    """Most probable terminated sequence of length <= max_len (exhaustive);
    ties go to the lexicographically smaller id sequence."""
    _check_limits(model, max_len)
    eos = model.vocab.eos_id
    best: tuple[float, tuple] = (-np.inf, ())
    stack = [((), model.start(context), 0.0)]
    while stack:
        prefix, state, logp = stack.pop()
        dist, state = model.next_distribution(state)
        for v in range(len(model.vocab)):
            lp = logp + float(dist.log_probs[v])
            if lp == -np.inf:
                continue
            seq = prefix + (v,)
            if v == eos:
                if lp > best[0] or (lp == best[0] and seq < best[1]):
                    best = (lp, seq)
            elif len(seq) < max_len:
                stack.append((seq, model.advance(state, v), lp))
    return best[1], best[0]
