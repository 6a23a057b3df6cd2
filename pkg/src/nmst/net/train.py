"""Mini-batch maximum-likelihood training with AdamW, learning-rate halving
and early stopping on validation perplexity."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..core import Vocabulary
from . import autodiff as ad
from .backbone import Architecture
from .lm import HeadSpec, RecurrentLM, as_tensors, batch_nll, corpus_nll, make_batch
from .optim import AdamWState, adamw_step, clip_by_global_norm, global_norm

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.99
    weight_decay: float = 0.01
    batch_size: int = 32
    max_epochs: int = 70
    patience: int = 10
    lr_decay: float = 0.5
    dropout_prob: float = 0.0
    seed: int = 0
    context_length: int = 10
    clip_norm: float = 1.0
    init_scale: float | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.context_length < 0:
            raise ValueError("context_length must be non-negative")
        if not 0.0 <= self.dropout_prob < 1.0:
            raise ValueError("dropout_prob must lie in [0, 1)")
        if self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("batch_size >= 1 and max_epochs >= 0 required")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_nll: float
    valid_ppl: float
    learning_rate: float
    improved: bool


@dataclass
class TrainResult:
    model: RecurrentLM
    history: list[EpochMetrics] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def best_valid_ppl(self) -> float:
        return min(m.valid_ppl for m in self.history)


def _perplexity(model, examples) -> float:
    nll, n = corpus_nll(model, examples)
    return math.exp(nll / n) if nll / n < 700 else math.inf


def train(train_set, valid_set, vocab: Vocabulary, arch: Architecture, head: HeadSpec,
          cfg: TrainConfig, frozen: tuple[str, ...] = ()) -> TrainResult:
    """Fit a :class:`RecurrentLM` on (context, target) id pairs.

    Epoch 0 records the untrained model.  After each epoch the learning rate is
    multiplied by ``lr_decay`` if validation perplexity did not improve, and
    training stops after ``patience`` such epochs in a row.  The returned model
    holds the best-validation parameters.
    """
    if not train_set or not valid_set:
        raise ValueError("train and validation sets must be non-empty")
    rng = np.random.default_rng(cfg.seed)
    model = RecurrentLM.init(vocab, arch, head, rng, cfg.init_scale)
    params = dict(model.params)
    opt = AdamWState()
    lr = cfg.learning_rate
    dropout_rng = np.random.default_rng([cfg.seed, 1]) if cfg.dropout_prob > 0 else None

    best_ppl = _perplexity(model, valid_set)
    best_params = params
    result = TrainResult(model, [EpochMetrics(0, float("nan"), best_ppl, lr, True)], 0)
    stale = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train_set))
        total, count = 0.0, 0
        for i in range(0, len(order), cfg.batch_size):
            batch = make_batch([train_set[j] for j in order[i:i + cfg.batch_size]], vocab.eos_id)
            tensors = as_tensors(params, frozen)
            with ad.Tape() as tape:
                loss = batch_nll(model, tensors, batch, cfg.dropout_prob, dropout_rng)
            if not math.isfinite(loss.item()):
                raise TrainingDiverged(f"non-finite loss {loss.item()} at epoch {epoch}, batch {i // cfg.batch_size}")
            grads = tape.gradients(loss, tensors)
            grads = {k: g / batch.num_tokens for k, g in grads.items()}
            if not math.isfinite(global_norm(grads)):
                raise TrainingDiverged(f"non-finite gradient at epoch {epoch}")
            grads = clip_by_global_norm(grads, cfg.clip_norm)
            trainable = {k: v for k, v in params.items() if k not in frozen}
            updated, opt = adamw_step(trainable, grads, opt, lr, cfg.beta1, cfg.beta2, cfg.weight_decay)
            params = {**params, **updated}
            model = RecurrentLM(vocab, arch, head, params)
            total += loss.item()
            count += batch.num_tokens

        ppl = _perplexity(model, valid_set)
        if not math.isfinite(ppl):
            raise TrainingDiverged(f"non-finite validation perplexity at epoch {epoch}")
        improved = ppl < best_ppl
        result.history.append(EpochMetrics(epoch, total / count, ppl, lr, improved))
        log.info("epoch %d train_nll %.4f valid_ppl %.3f lr %.2e", epoch, total / count, ppl, lr)
        if improved:
            best_ppl, best_params, result.best_epoch, stale = ppl, params, epoch, 0
        else:
            stale += 1
            lr *= cfg.lr_decay
            if stale >= cfg.patience:
                break
    result.model = RecurrentLM(vocab, arch, head, best_params)
    return result
