"""Central finite-difference check of taped gradients of the summed NLL."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .lm import RecurrentLM, as_tensors, batch_nll, make_batch


@dataclass(frozen=True)
class GradCheck:
    max_rel_error: float
    worst_param: str
    worst_index: tuple
    checked: int


def relative_error(a: np.ndarray, n: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor), elementwise."""
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def analytic_gradients(model: RecurrentLM, examples, frozen=()) -> dict[str, np.ndarray]:
    batch = make_batch(examples, model.vocab.eos_id)
    tensors = as_tensors(model.params, frozen)
    with ad.Tape() as tape:
        loss = batch_nll(model, tensors, batch)
    return tape.gradients(loss, tensors)


def check_gradients(model: RecurrentLM, examples, h: float = 1e-4, frozen=(),
                    max_entries: int | None = None, rng: np.random.Generator | None = None) -> GradCheck:
    """Compare every (or ``max_entries`` random) parameter entries against
    (L(p + h) - L(p - h)) / 2h."""
    batch = make_batch(examples, model.vocab.eos_id)
    grads = analytic_gradients(model, examples, frozen)
    entries = [(k, idx) for k, v in model.params.items() for idx in np.ndindex(v.shape)]
    if max_entries is not None and len(entries) > max_entries:
        rng = rng or np.random.default_rng(0)
        entries = [entries[i] for i in rng.choice(len(entries), max_entries, replace=False)]

    def loss_at(params):
        return batch_nll(RecurrentLM(model.vocab, model.arch, model.head, params),
                         as_tensors(params, tuple(params)), batch).item()

    worst = (0.0, "", ())
    for name, idx in entries:
        plus = {k: v.copy() for k, v in model.params.items()}
        minus = {k: v.copy() for k, v in model.params.items()}
        plus[name][idx] += h
        minus[name][idx] -= h
        numeric = 0.0 if name in frozen else (loss_at(plus) - loss_at(minus)) / (2 * h)
        err = float(relative_error(np.array(grads[name][idx]), np.array(numeric)))
        if err > worst[0]:
            worst = (err, name, idx)
    return GradCheck(worst[0], worst[1], worst[2], len(entries))
