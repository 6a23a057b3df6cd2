"""Vocabulary, sequences, per-step distributions and the conditional-model interface."""

from __future__ import annotations

import abc
import collections
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence as Seq

import numpy as np

EOS = "<eos>"
UNK = "<unk>"


class VocabularyError(ValueError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    eos_id: int = 0
    unk_id: int | None = None
    _index: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        tokens = tuple(self.tokens)
        object.__setattr__(self, "tokens", tokens)
        if len(tokens) < 2:
            raise VocabularyError("vocabulary needs at least two tokens")
        if len(set(tokens)) != len(tokens):
            raise VocabularyError("duplicate token strings")
        if not 0 <= self.eos_id < len(tokens):
            raise VocabularyError(f"eos_id {self.eos_id} out of range")
        if self.unk_id is not None:
            if not 0 <= self.unk_id < len(tokens) or self.unk_id == self.eos_id:
                raise VocabularyError(f"bad unk_id {self.unk_id}")
        object.__setattr__(self, "_index", {tok: i for i, tok in enumerate(tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def id(self, token: str) -> int:
        return self._index[token]

    @property
    def eos(self) -> str:
        return self.tokens[self.eos_id]

    @classmethod
    def of_size(cls, size: int) -> "Vocabulary":
        """Synthetic vocabulary ``<eos>, t1, ..., t{size-1}`` for handcrafted models."""
        return cls((EOS,) + tuple(f"t{i}" for i in range(1, size)), eos_id=0)

    def to_dict(self) -> dict:
        return {"tokens": list(self.tokens), "eos_id": self.eos_id, "unk_id": self.unk_id}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Vocabulary":
        return cls(tuple(d["tokens"]), eos_id=int(d["eos_id"]),
                   unk_id=None if d.get("unk_id") is None else int(d["unk_id"]))


@dataclass(frozen=True)
class Sequence:
    """Token ids of a (possibly unfinished) continuation.

    ``terminated`` is true iff the final id is eos; eos may appear nowhere else.
    """

    token_ids: tuple[int, ...]
    eos_id: int = 0

    def __post_init__(self):
        ids = tuple(int(i) for i in self.token_ids)
        object.__setattr__(self, "token_ids", ids)
        if self.eos_id in ids[:-1]:
            raise ValueError("eos may only appear at the final position")

    @property
    def terminated(self) -> bool:
        return bool(self.token_ids) and self.token_ids[-1] == self.eos_id

    def __len__(self) -> int:
        return len(self.token_ids)

    def __iter__(self):
        return iter(self.token_ids)


@dataclass(frozen=True)
class Context:
    token_ids: tuple[int, ...]
    eos_id: int = 0

    def __post_init__(self):
        ids = tuple(int(i) for i in self.token_ids)
        object.__setattr__(self, "token_ids", ids)
        if self.eos_id in ids:
            raise ValueError("context may not contain eos")

    def __len__(self) -> int:
        return len(self.token_ids)


@dataclass(frozen=True)
class ConditionalDistribution:
    """Next-token distribution, stored in both linear and log space.

    Log space is authoritative for losses; linear space feeds sampling.
    """

    probs: np.ndarray
    log_probs: np.ndarray

    def __post_init__(self):
        for name in ("probs", "log_probs"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_log_probs(cls, log_probs) -> "ConditionalDistribution":
        log_probs = np.asarray(log_probs, dtype=np.float64)
        return cls(np.exp(log_probs), log_probs)

    @classmethod
    def from_probs(cls, probs) -> "ConditionalDistribution":
        probs = np.asarray(probs, dtype=np.float64)
        with np.errstate(divide="ignore"):
            return cls(probs, np.log(probs))

    def __len__(self) -> int:
        return len(self.probs)


@dataclass(frozen=True)
class DistributionCheck:
    ok: bool
    normalization_error: float
    log_consistency_error: float
    min_prob: float

    def __bool__(self) -> bool:
        return self.ok


def validate_distribution(d: ConditionalDistribution, atol: float = 1e-9,
                          rtol: float = 1e-9) -> DistributionCheck:
    probs = np.asarray(d.probs, dtype=np.float64)
    norm_err = float(abs(probs.sum() - 1.0))
    with np.errstate(over="ignore", invalid="ignore"):
        back = np.exp(np.asarray(d.log_probs, dtype=np.float64))
        rel = np.abs(back - probs) / np.maximum(np.abs(probs), np.finfo(float).tiny)
    rel = np.where(probs == back, 0.0, rel)
    log_err = float(np.max(rel)) if rel.size else 0.0
    min_prob = float(probs.min()) if probs.size else 0.0
    ok = (bool(np.all(np.isfinite(probs))) and min_prob >= 0.0
          and norm_err <= atol and log_err <= rtol)
    return DistributionCheck(ok, norm_err, log_err, min_prob)


def build_vocabulary(corpus_tokens: Iterable[Seq[str]], min_freq: int = 1,
                     add_unk: bool = False) -> Vocabulary:
    """Canonical vocabulary: eos, then unk (if requested), then tokens by
    descending frequency with ties in lexical order."""
    counts: collections.Counter[str] = collections.Counter()
    n_lines = 0
    for line in corpus_tokens:
        n_lines += 1
        counts.update(line)
    if n_lines == 0:
        raise VocabularyError("empty corpus")
    counts.pop(EOS, None)
    counts.pop(UNK, None)
    kept = sorted((tok for tok, c in counts.items() if c >= min_freq),
                  key=lambda tok: (-counts[tok], tok))
    head = [EOS] + ([UNK] if add_unk else [])
    return Vocabulary(tuple(head + kept), eos_id=0, unk_id=1 if add_unk else None)


def encode(v: Vocabulary, tokens: Seq[str], append_eos: bool = False) -> Sequence:
    ids = []
    for tok in tokens:
        if tok in v:
            ids.append(v.id(tok))
        elif v.unk_id is not None:
            ids.append(v.unk_id)
        else:
            raise VocabularyError(f"unknown token {tok!r} and vocabulary has no unk")
    if append_eos:
        ids.append(v.eos_id)
    return Sequence(tuple(ids), v.eos_id)


def decode(v: Vocabulary, ids: Iterable[int], strip_eos: bool = True) -> list[str]:
    return [v.tokens[i] for i in ids if not (strip_eos and i == v.eos_id)]


def tokenize(line: str, mode: str = "char") -> list[str]:
    if mode == "char":
        return list(line)
    if mode == "word":
        return line.split()
    raise ValueError(f"unknown tokenizer mode {mode!r}")


def detokenize(tokens: Seq[str], mode: str = "char") -> str:
    return ("" if mode == "char" else " ").join(tokens)


class ConditionalModel(abc.ABC):
    """Autoregressive model p(y_t | y_<t, x) seen one step at a time.

    States are immutable values.  ``start`` consumes the context,
    ``next_distribution`` gives p(. | state) together with the state carrying
    any per-step head bookkeeping, and ``advance`` consumes a chosen token.
    """

    vocab: Vocabulary

    @abc.abstractmethod
    def start(self, context: Seq[int]) -> Any: ...

    @abc.abstractmethod
    def next_distribution(self, state: Any) -> tuple[ConditionalDistribution, Any]: ...

    @abc.abstractmethod
    def advance(self, state: Any, token: int) -> Any: ...

    def step(self, context: Seq[int], prefix: Seq[int], state: Any = None
             ) -> tuple[ConditionalDistribution, Any]:
        """Distribution after ``prefix``; ``state`` may be a cached state for
        ``context + prefix[:-1]`` after ``next_distribution``, else None."""
        if state is None:
            state = self.start(context)
            for tok in prefix:
                _, state = self.next_distribution(state)
                state = self.advance(state, tok)
        else:
            state = self.advance(state, prefix[-1])
        return self.next_distribution(state)

    def sequence_log_prob(self, context: Seq[int], target: Seq[int]) -> float:
        state = self.start(context)
        total = 0.0
        for tok in target:
            dist, state = self.next_distribution(state)
            total += float(dist.log_probs[tok])
            state = self.advance(state, tok)
        return total


class TableModel(ConditionalModel):
    """Handcrafted model whose next-token distribution is looked up by the
    generated prefix (context is ignored).

    ``table`` maps prefix tuples to probability vectors; prefixes missing from
    the table fall back to ``default`` (a vector, or a callable of the prefix).
    """

    def __init__(self, vocab: Vocabulary, table: Mapping[tuple, Seq[float]] | None = None,
                 default=None):
        self.vocab = vocab
        self._default = default
        self._dists: dict[tuple, ConditionalDistribution] = {}
        for prefix, probs in (table or {}).items():
            self._dists[tuple(prefix)] = self._make(probs)

    def _make(self, probs) -> ConditionalDistribution:
        probs = np.asarray(probs, dtype=np.float64)
        if probs.shape != (len(self.vocab),):
            raise ValueError(f"table row has shape {probs.shape}, expected ({len(self.vocab)},)")
        return ConditionalDistribution.from_probs(probs)

    def lookup(self, prefix: tuple) -> ConditionalDistribution:
        dist = self._dists.get(prefix)
        if dist is None:
            if self._default is None:
                raise KeyError(f"no table entry for prefix {prefix}")
            row = self._default(prefix) if callable(self._default) else self._default
            dist = self._dists[prefix] = self._make(row)
        return dist

    def start(self, context):
        return ()

    def next_distribution(self, state):
        return self.lookup(state), state

    def advance(self, state, token):
        return state + (int(token),)

    @classmethod
    def constant(cls, vocab: Vocabulary, probs) -> "TableModel":
        return cls(vocab, {}, default=np.asarray(probs, dtype=np.float64))

    @classmethod
    def uniform(cls, vocab_size: int) -> "TableModel":
        return cls.constant(Vocabulary.of_size(vocab_size), np.full(vocab_size, 1.0 / vocab_size))


def random_table_model(vocab_size: int, depth: int, rng: np.random.Generator,
                       concentration: float = 0.7) -> TableModel:
    """Table model with an independent Dirichlet row for every non-terminated
    prefix shorter than ``depth``; deeper prefixes are forced to eos."""
    vocab = Vocabulary.of_size(vocab_size)
    table = {}
    frontier = [()]
    for _ in range(depth):
        nxt = []
        for prefix in frontier:
            table[prefix] = rng.dirichlet(np.full(vocab_size, concentration))
            nxt.extend(prefix + (v,) for v in range(vocab_size) if v != vocab.eos_id)
        frontier = nxt
    eos_row = np.zeros(vocab_size)
    eos_row[vocab.eos_id] = 1.0
    return TableModel(vocab, table, default=eos_row)
