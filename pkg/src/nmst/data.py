"""Corpus ingestion (one sequence per line), context/target splitting and a
small synthetic word-level corpus."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence as Seq

import numpy as np

from .core import Vocabulary, build_vocabulary, encode, tokenize

Example = tuple[tuple[int, ...], tuple[int, ...]]


def read_corpus(path: str | Path, mode: str = "char") -> list[list[str]]:
    """Tokenized non-empty lines of a UTF-8 text file."""
    with open(path, encoding="utf-8") as f:
        return [tokenize(line.rstrip("\n"), mode) for line in f if line.strip()]


def split_lines(lines: Seq, fractions: Seq[float] = (0.8, 0.1, 0.1), seed: int = 0) -> list[list]:
    """Shuffle and cut into consecutive parts of the given fractions."""
    if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must be non-negative and sum to 1, got {fractions}")
    order = np.random.default_rng(seed).permutation(len(lines))
    bounds = np.round(np.cumsum(fractions) * len(lines)).astype(int)
    parts, start = [], 0
    for end in bounds:
        parts.append([lines[i] for i in order[start:end]])
        start = end
    return parts


def make_examples(lines: Seq[Seq[str]], vocab: Vocabulary, context_length: int) -> list[Example]:
    """First ``context_length`` tokens become the context, the rest plus eos
    the target.  Lines with at most ``context_length`` tokens are dropped."""
    if context_length < 0:
        raise ValueError("context_length must be non-negative")
    out = []
    for toks in lines:
        if len(toks) <= context_length:
            continue
        ids = encode(vocab, toks, append_eos=True).token_ids
        out.append((tuple(ids[:context_length]), tuple(ids[context_length:])))
    return out


def prepare_corpus(lines: Seq[Seq[str]], context_length: int, fractions=(0.8, 0.1, 0.1),
                   seed: int = 0, min_freq: int = 1) -> tuple[Vocabulary, list[list[Example]]]:
    """Vocabulary from the training part; unk is added when ``min_freq`` > 1
    so rarer and unseen tokens still encode."""
    parts = split_lines(lines, fractions, seed)
    vocab = build_vocabulary(parts[0], min_freq=min_freq, add_unk=True)
    return vocab, [make_examples(p, vocab, context_length) for p in parts]


NOUNS = ("cat", "dog", "bird", "fish", "child", "farmer", "river", "tree", "house", "boat",
         "king", "horse", "garden", "storm", "song")
ADJECTIVES = ("old", "small", "red", "quiet", "happy", "dark", "tall", "green", "cold", "brave")
VERBS = ("sees", "finds", "likes", "follows", "paints", "hears", "carries", "watches", "leaves",
         "builds", "calls", "keeps")
JOINERS = ("and", "then", "but")


def synthetic_corpus(n_lines: int, seed: int = 0, max_clauses: int = 4) -> list[str]:
    """Word-level lines of 1..max_clauses clauses, each closed by ".".

    A line may end after any clause, so the end of a line is predictable
    from the text only partially; about 45 word types in all.
    """
    rng = np.random.default_rng(seed)
    pick = lambda xs: xs[rng.integers(len(xs))]
    lines = []
    for _ in range(n_lines):
        words = []
        for c in range(int(rng.integers(1, max_clauses + 1))):
            if c:
                words.append(pick(JOINERS))
            words += ["the"] + ([pick(ADJECTIVES)] if rng.random() < 0.5 else []) + [pick(NOUNS), pick(VERBS)]
            words += ["a" if rng.random() < 0.5 else "the", pick(NOUNS), "."]
        lines.append(" ".join(words))
    return lines
