"""Recurrent backbones (tanh RNN and LSTM) in two forms: a numpy step
function for decoding and a taped batch forward for training."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit

from . import autodiff as ad

CELLS = ("rnn", "lstm")


@dataclass(frozen=True)
class Architecture:
    cell: str
    vocab_size: int
    hidden_size: int = 64
    num_layers: int = 1
    tie_weights: bool = True

    def __post_init__(self):
        if self.cell not in CELLS:
            raise ValueError(f"cell must be one of {CELLS}, got {self.cell!r}")
        if self.vocab_size < 2 or self.hidden_size < 1 or self.num_layers < 1:
            raise ValueError(f"bad architecture {self}")

    @property
    def gates(self) -> int:
        return 4 if self.cell == "lstm" else 1

    def to_dict(self) -> dict:
        return asdict(self)


def param_shapes(arch: Architecture) -> dict[str, tuple[int, ...]]:
    """Parameter names and shapes in canonical (serialization) order."""
    H, G = arch.hidden_size, arch.gates
    shapes = {"embedding": (arch.vocab_size, H)}
    for layer in range(arch.num_layers):
        shapes[f"{arch.cell}{layer}.w_x"] = (H, G * H)
        shapes[f"{arch.cell}{layer}.w_h"] = (H, G * H)
        shapes[f"{arch.cell}{layer}.b"] = (G * H,)
    if not arch.tie_weights:
        shapes["output"] = (arch.vocab_size, H)
    return shapes


def init_params(arch: Architecture, rng: np.random.Generator, scale: float | None = None
                ) -> dict[str, np.ndarray]:
    """Uniform(-s, s) with s = 1/sqrt(hidden) unless ``scale`` is given; biases 0
    except an LSTM forget-gate bias of 1."""
    s = 1.0 / np.sqrt(arch.hidden_size) if scale is None else scale
    params = {}
    for name, shape in param_shapes(arch).items():
        if name.endswith(".b"):
            b = np.zeros(shape)
            if arch.cell == "lstm":
                H = arch.hidden_size
                b[H:2 * H] = 1.0
            params[name] = b
        else:
            params[name] = rng.uniform(-s, s, size=shape)
    return params


def output_embeddings(arch: Architecture, params):
    return params["embedding"] if arch.tie_weights else params["output"]


def initial_state(arch: Architecture) -> tuple:
    """All-zero recurrent state: per layer ``h`` (RNN) or ``(h, c)`` (LSTM)."""
    H = arch.hidden_size
    if arch.cell == "lstm":
        return tuple((np.zeros(H), np.zeros(H)) for _ in range(arch.num_layers))
    return tuple(np.zeros(H) for _ in range(arch.num_layers))


def forward_step(arch: Architecture, params, token: int, state: tuple
                 ) -> tuple[np.ndarray, tuple]:
    """Consume one token; returns the top-layer hidden vector and the new state."""
    if not 0 <= token < arch.vocab_size:
        raise ValueError(f"token {token} outside vocabulary of size {arch.vocab_size}")
    if len(state) != arch.num_layers:
        raise ValueError("state has the wrong number of layers")
    H = arch.hidden_size
    x = params["embedding"][token]
    new_state = []
    for layer, s in enumerate(state):
        w_x = params[f"{arch.cell}{layer}.w_x"]
        w_h = params[f"{arch.cell}{layer}.w_h"]
        b = params[f"{arch.cell}{layer}.b"]
        if arch.cell == "rnn":
            if np.shape(s) != (H,):
                raise ValueError("hidden state shape mismatch")
            x = np.tanh(x @ w_x + s @ w_h + b)
            new_state.append(x)
        else:
            h, c = s
            if np.shape(h) != (H,) or np.shape(c) != (H,):
                raise ValueError("hidden state shape mismatch")
            a = x @ w_x + h @ w_h + b
            gates = expit(a)
            i, f, g, o = gates[:H], gates[H:2 * H], np.tanh(a[2 * H:3 * H]), gates[3 * H:]
            c = f * c + i * g
            x = o * np.tanh(c)
            new_state.append((x, c))
    return x, tuple(new_state)


def taped_forward(arch: Architecture, params: dict[str, ad.Tensor], inputs: np.ndarray,
                  dropout: float = 0.0, rng: np.random.Generator | None = None) -> ad.Tensor:
    """Top-layer hidden states (B, T, H) for a right-padded id matrix (B, T).

    Dropout (when ``rng`` is given) sits between layers and on the output.
    """
    B, T = inputs.shape
    H = arch.hidden_size
    x = ad.getitem(params["embedding"], inputs)
    for layer in range(arch.num_layers):
        if layer > 0:
            x = ad.dropout(x, dropout, rng)
        w_h = params[f"{arch.cell}{layer}.w_h"]
        proj = x @ params[f"{arch.cell}{layer}.w_x"] + params[f"{arch.cell}{layer}.b"]
        h = ad.Tensor(np.zeros((B, H)))
        c = ad.Tensor(np.zeros((B, H)))
        outs = []
        for t in range(T):
            a = proj[:, t] + h @ w_h
            if arch.cell == "rnn":
                h = ad.tanh(a)
            else:
                i = ad.sigmoid(a[:, :H])
                f = ad.sigmoid(a[:, H:2 * H])
                g = ad.tanh(a[:, 2 * H:3 * H])
                o = ad.sigmoid(a[:, 3 * H:])
                c = f * c + i * g
                h = o * ad.tanh(c)
            outs.append(h)
        x = ad.stack(outs, axis=1)
    return ad.dropout(x, dropout, rng)
