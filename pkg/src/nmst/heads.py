"""Output layers mapping a hidden state to a next-token distribution.

Three parametrizations share the same output embeddings ``U`` (one row per
token):

* ``VA``   plain softmax over all tokens,
* ``ST``   eos probability ``1 - prod_t' (1-eps) sigmoid(u_eos . h_t')``, which
  only ever grows with t,
* ``NMST`` eos probability ``(1 - s_t) f_lb(t) + s_t`` with
  ``s_t = sigmoid(u_eos . h_t)`` and ``f_lb(t) = 1 - (1-eps)^t``; free to go
  up and down but never below ``f_lb(t)``.

For ST and NMST the remaining mass ``1 - alpha_t`` is spread over non-eos
tokens by a softmax that excludes eos.  Everything is done in log space.
"""

from __future__ import annotations

import decimal
import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import ConditionalDistribution


class HeadKind(str, enum.Enum):
    VA = "va"
    ST = "st"
    NMST = "nmst"


@dataclass(frozen=True)
class HeadParams:
    output_embeddings: np.ndarray
    kind: HeadKind
    epsilon: float | None = None
    eos_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", HeadKind(self.kind))
        if self.kind is HeadKind.VA:
            if self.epsilon is not None:
                raise ValueError("epsilon is meaningless for a VA head")
        elif self.epsilon is None or not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"{self.kind.value} head needs epsilon in (0, 1), got {self.epsilon}")
        if np.ndim(self.output_embeddings) != 2:
            raise ValueError("output_embeddings must be a (vocab, dim) matrix")

    @property
    def eos_row(self) -> np.ndarray:
        return self.output_embeddings[self.eos_id]


@dataclass(frozen=True)
class HeadState:
    """Steps already emitted (``t``) and the running ST log-survival
    ``sum_t' log((1-eps) sigmoid(u_eos . h_t'))``; both start at 0."""

    t: int = 0
    st_log_survival: float = 0.0


def sigmoid(x):
    return expit(np.asarray(x, dtype=np.float64))


def log_sigmoid(x):
    if isinstance(x, (float, int)):
        return min(x, 0.0) - math.log1p(math.exp(-abs(x)))
    x = np.asarray(x, dtype=np.float64)
    return np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))


def log1mexp(x):
    """log(1 - exp(x)) for x <= 0, switching branches at -ln 2."""
    if isinstance(x, (float, int)):
        x = min(x, 0.0)
        if x == 0.0:
            return -math.inf
        return math.log(-math.expm1(x)) if x > -math.log(2.0) else math.log1p(-math.exp(x))
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return np.where(x > -math.log(2.0),
                        np.log(-np.expm1(np.minimum(x, 0.0))),
                        np.log1p(-np.exp(np.minimum(x, -math.log(2.0)))))


def log_softmax(logits, axis=-1):
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim == 1:
        shifted = logits - logits.max()
        return shifted - math.log(np.exp(shifted).sum())
    shifted = logits - logits.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def eos_lower_bound(epsilon: float, t) -> float:
    """f_lb(t) = 1 - (1-eps)^t."""
    if np.ndim(t):
        return -np.expm1(np.asarray(t, dtype=np.float64) * math.log1p(-epsilon))
    return -math.expm1(t * math.log1p(-epsilon))


def log_eos_lower_bound(epsilon: float, t):
    if isinstance(t, (float, int)):
        return log1mexp(float(t) * math.log1p(-epsilon))
    return log1mexp(np.asarray(t, dtype=np.float64) * math.log1p(-epsilon))


def _survives_half(epsilon: float, t: int) -> bool:
    """(1-eps)^t >= 1/2, decided in 60-digit decimal arithmetic on the exact
    binary value of ``epsilon`` (float rounding flips the answer near the
    boundary)."""
    with decimal.localcontext() as ctx:
        ctx.prec = 60
        return (1 - decimal.Decimal(epsilon)) ** t >= decimal.Decimal("0.5")


def half_life(epsilon: float) -> int:
    """Smallest t >= 1 with f_lb(t) > 1/2."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    t = max(1, math.ceil(math.log(0.5) / math.log1p(-epsilon)))
    while t > 1 and not _survives_half(epsilon, t - 1):
        t -= 1
    while _survives_half(epsilon, t):
        t += 1
    return t


def _split_eos(logits, log_alpha, log_rest, eos_id):
    """eos gets alpha; the others share 1 - alpha by a softmax without eos."""
    logits = np.asarray(logits, dtype=np.float64)
    masked = logits.copy()
    masked[..., eos_id] = -np.inf
    out = np.asarray(log_rest)[..., None] + log_softmax(masked)
    out[..., eos_id] = log_alpha
    return out


def va_log_probs(logits):
    return log_softmax(logits)


def nmst_log_probs(logits, epsilon: float, t, eos_id: int = 0):
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim == 1 and np.ndim(t) == 0:
        z, t = float(logits[eos_id]), int(t)
        log_keep = log_sigmoid(-z)
        log_alpha = np.logaddexp(log_keep + log_eos_lower_bound(epsilon, t), log_sigmoid(z))
        return _split_eos(logits, float(log_alpha), log_keep + t * math.log1p(-epsilon), eos_id)
    z = logits[..., eos_id]
    t = np.asarray(t, dtype=np.float64)
    log_keep = log_sigmoid(-z)
    log_rest = log_keep + t * math.log1p(-epsilon)
    log_alpha = np.logaddexp(log_keep + log_eos_lower_bound(epsilon, t), log_sigmoid(z))
    return _split_eos(logits, log_alpha, log_rest, eos_id)


def st_log_probs(logits, epsilon: float, log_survival, eos_id: int = 0):
    """Returns (log-probs, updated log-survival)."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim == 1 and np.ndim(log_survival) == 0:
        survival = float(log_survival) + math.log1p(-epsilon) + log_sigmoid(float(logits[eos_id]))
        return _split_eos(logits, log1mexp(survival), survival, eos_id), survival
    z = logits[..., eos_id]
    survival = np.asarray(log_survival, dtype=np.float64) + math.log1p(-epsilon) + log_sigmoid(z)
    return _split_eos(logits, log1mexp(survival), survival, eos_id), survival


def va_head(h, p: HeadParams) -> ConditionalDistribution:
    if p.kind is not HeadKind.VA:
        raise ValueError("va_head needs a VA head")
    return ConditionalDistribution.from_log_probs(va_log_probs(p.output_embeddings @ h))


def st_head(h, p: HeadParams, s: HeadState) -> tuple[ConditionalDistribution, HeadState]:
    if p.kind is not HeadKind.ST:
        raise ValueError("st_head needs an ST head")
    lp, survival = st_log_probs(p.output_embeddings @ h, p.epsilon, s.st_log_survival, p.eos_id)
    return ConditionalDistribution.from_log_probs(lp), HeadState(s.t + 1, float(survival))


def nmst_head(h, p: HeadParams, t: int) -> ConditionalDistribution:
    if p.kind is not HeadKind.NMST:
        raise ValueError("nmst_head needs an NMST head")
    if t < 1:
        raise ValueError("step index starts at 1")
    return ConditionalDistribution.from_log_probs(
        nmst_log_probs(p.output_embeddings @ h, p.epsilon, t, p.eos_id))


def apply_head(h, p: HeadParams, s: HeadState) -> tuple[ConditionalDistribution, HeadState]:
    """Dispatch on head kind; advances the step counter for every kind."""
    if p.kind is HeadKind.ST:
        return st_head(h, p, s)
    if p.kind is HeadKind.NMST:
        return nmst_head(h, p, s.t + 1), HeadState(s.t + 1, s.st_log_survival)
    return va_head(h, p), HeadState(s.t + 1, s.st_log_survival)
