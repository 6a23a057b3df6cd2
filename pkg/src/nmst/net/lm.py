"""Recurrent language model = backbone + output head, plus the MLE loss."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence as Seq

import numpy as np

from .. import heads
from ..core import ConditionalDistribution, ConditionalModel, Vocabulary
from ..heads import HeadKind, HeadParams, HeadState
from . import autodiff as ad
from .backbone import Architecture, forward_step, init_params, initial_state, output_embeddings, taped_forward


@dataclass(frozen=True)
class HeadSpec:
    kind: HeadKind
    epsilon: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", HeadKind(self.kind))
        if self.kind is HeadKind.VA and self.epsilon is not None:
            raise ValueError("epsilon is meaningless for a VA head")
        if self.kind is not HeadKind.VA and not (self.epsilon is not None and 0.0 < self.epsilon < 1.0):
            raise ValueError(f"{self.kind.value} head needs epsilon in (0, 1)")

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "epsilon": self.epsilon}


@dataclass(frozen=True)
class LMState:
    recurrent: tuple
    hidden: np.ndarray
    head: HeadState = field(default_factory=HeadState)


class RecurrentLM(ConditionalModel):
    """Backbone + head as a :class:`ConditionalModel`.

    The input stream is ``<eos>`` (acting as a start symbol), the context,
    then generated tokens; the head step index restarts at 1 after the context.
    """

    def __init__(self, vocab: Vocabulary, arch: Architecture, head: HeadSpec,
                 params: dict[str, np.ndarray]):
        if arch.vocab_size != len(vocab):
            raise ValueError("architecture vocab size does not match vocabulary")
        self.vocab = vocab
        self.arch = arch
        self.head = head
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
        self._head_params = None

    @classmethod
    def init(cls, vocab: Vocabulary, arch: Architecture, head: HeadSpec,
             rng: np.random.Generator, scale: float | None = None) -> "RecurrentLM":
        return cls(vocab, arch, head, init_params(arch, rng, scale))

    @property
    def head_params(self) -> HeadParams:
        if self._head_params is None:
            self._head_params = HeadParams(output_embeddings(self.arch, self.params),
                                           self.head.kind, self.head.epsilon, self.vocab.eos_id)
        return self._head_params

    @property
    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def start(self, context: Seq[int]) -> LMState:
        rec = initial_state(self.arch)
        h, rec = forward_step(self.arch, self.params, self.vocab.eos_id, rec)
        for tok in context:
            h, rec = forward_step(self.arch, self.params, int(tok), rec)
        return LMState(rec, h)

    def next_distribution(self, state: LMState) -> tuple[ConditionalDistribution, LMState]:
        dist, head_state = heads.apply_head(state.hidden, self.head_params, state.head)
        return dist, replace(state, head=head_state)

    def advance(self, state: LMState, token: int) -> LMState:
        h, rec = forward_step(self.arch, self.params, int(token), state.recurrent)
        return LMState(rec, h, state.head)


@dataclass(frozen=True)
class Batch:
    """Right-padded teacher-forcing batch.

    ``inputs[b, j]`` is fed at position j and ``targets[b, j]`` predicted
    from it; ``mask`` marks continuation positions; ``steps`` is the head
    step index t (1 at the first continuation token).
    """

    inputs: np.ndarray
    targets: np.ndarray
    mask: np.ndarray
    steps: np.ndarray

    @property
    def num_tokens(self) -> int:
        return int(self.mask.sum())


def make_batch(examples: Seq[tuple[Seq[int], Seq[int]]], eos_id: int) -> Batch:
    lengths = [len(c) + len(y) for c, y in examples]
    B, T = len(examples), max(lengths)
    inputs = np.full((B, T), eos_id, dtype=np.int64)
    targets = np.full((B, T), eos_id, dtype=np.int64)
    mask = np.zeros((B, T), dtype=bool)
    steps = np.ones((B, T), dtype=np.int64)
    for b, (ctx, y) in enumerate(examples):
        stream = [eos_id] + list(ctx) + list(y)
        n, c = len(stream) - 1, len(ctx)
        inputs[b, :n] = stream[:-1]
        targets[b, :n] = stream[1:]
        mask[b, c:n] = True
        steps[b, c:n] = np.arange(1, n - c + 1)
    return Batch(inputs, targets, mask, steps)


def taped_head_log_probs(head: HeadSpec, eos_id: int, hidden: ad.Tensor, out_emb: ad.Tensor,
                         batch: Batch) -> ad.Tensor:
    """(B, T, V) log-probabilities from (B, T, H) hidden states."""
    logits = hidden @ out_emb.T
    if head.kind is HeadKind.VA:
        return ad.log_softmax(logits)
    V = logits.shape[-1]
    eos_col = np.zeros(V, dtype=bool)
    eos_col[eos_id] = True
    z = logits[:, :, eos_id]
    rest = ad.log_softmax(logits + np.where(eos_col, -np.inf, 0.0))
    log1m_eps = math.log1p(-head.epsilon)
    if head.kind is HeadKind.NMST:
        log_keep = ad.log_sigmoid(-z)
        log_rest = log_keep + batch.steps * log1m_eps
        log_flb = heads.log_eos_lower_bound(head.epsilon, batch.steps)
        log_alpha = ad.logaddexp(log_keep + log_flb, ad.log_sigmoid(z))
    else:
        factors = ad.where(batch.mask, ad.log_sigmoid(z) + log1m_eps, 0.0)
        survival = ad.cumsum(factors, axis=1)
        log_rest = survival
        log_alpha = ad.log1mexp(ad.where(batch.mask, survival, -1.0))
    B, T = z.shape
    return ad.where(eos_col, ad.reshape(log_alpha, (B, T, 1)),
                    ad.reshape(log_rest, (B, T, 1)) + rest)


def taped_log_probs(model: RecurrentLM, params: dict[str, ad.Tensor], batch: Batch,
                    dropout: float = 0.0, rng: np.random.Generator | None = None) -> ad.Tensor:
    hidden = taped_forward(model.arch, params, batch.inputs, dropout, rng)
    out_emb = params["embedding"] if model.arch.tie_weights else params["output"]
    return taped_head_log_probs(model.head, model.vocab.eos_id, hidden, out_emb, batch)


def batch_nll(model: RecurrentLM, params: dict[str, ad.Tensor], batch: Batch,
              dropout: float = 0.0, rng: np.random.Generator | None = None) -> ad.Tensor:
    """Summed negative log-likelihood over continuation tokens (padding and
    context positions contribute nothing)."""
    lp = taped_log_probs(model, params, batch, dropout, rng)
    B, T = batch.targets.shape
    picked = lp[np.arange(B)[:, None], np.arange(T)[None, :], batch.targets]
    return -ad.where(batch.mask, picked, 0.0).sum()


def as_tensors(params: dict[str, np.ndarray], frozen: Seq[str] = ()) -> dict[str, ad.Tensor]:
    return {k: ad.Tensor(v, requires_grad=k not in frozen, name=k) for k, v in params.items()}


def teacher_forced_log_probs(model: RecurrentLM, examples, batch_size: int = 64
                             ) -> list[np.ndarray]:
    """Per-example (T, V) log-probability matrices along the targets, computed
    batched without recording a tape."""
    params = as_tensors(model.params, frozen=tuple(model.params))
    out = []
    for i in range(0, len(examples), batch_size):
        chunk = examples[i:i + batch_size]
        batch = make_batch(chunk, model.vocab.eos_id)
        lp = taped_log_probs(model, params, batch).data
        for b, (ctx, y) in enumerate(chunk):
            out.append(lp[b, len(ctx):len(ctx) + len(y)])
    return out


def sequence_nll(model: ConditionalModel, context: Seq[int], target: Seq[int]) -> tuple[float, int]:
    """Total -log p(target | context) over continuation tokens, and their count."""
    if not target or target[-1] != model.vocab.eos_id:
        raise ValueError("target must end with eos")
    return -model.sequence_log_prob(context, target), len(target)


def corpus_nll(model: ConditionalModel, examples) -> tuple[float, int]:
    """Summed continuation NLL and token count over (context, target) pairs."""
    if isinstance(model, RecurrentLM):
        total, count = 0.0, 0
        for (ctx, y), lp in zip(examples, teacher_forced_log_probs(model, examples)):
            total -= float(lp[np.arange(len(y)), list(y)].sum())
            count += len(y)
        return total, count
    total, count = 0.0, 0
    for ctx, y in examples:
        nll, n = sequence_nll(model, ctx, y)
        total += nll
        count += n
    return total, count
