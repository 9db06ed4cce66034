"""Temporal model: K5-P2-K5-P2 convolution pyramid, two-layer BiLSTM and the gloss classifier.

Each convolution is followed by a per-sequence normalisation over time (learned
gain and bias) before its ReLU, which keeps the head trainable on the nearly
constant class-token features a frozen backbone can produce.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .errors import ConfigError, SequenceTooShortError
from .numerics import Module, Tensor, ones_param, trunc_normal, zeros_param

KERNEL = 5
POOL = 2
MIN_FRAMES = POOL * POOL
BLANK = 0
NORM_EPS = 1e-5


@dataclass(frozen=True)
class SeqConfig:
    dim: int
    vocab: int
    lstm_layers: int = 2

    def __post_init__(self):
        if self.dim % 2:
            raise ConfigError(f"sequence head width must be even, got {self.dim}")
        if self.vocab < 1:
            raise ConfigError(f"vocabulary must hold at least one gloss, got {self.vocab}")

    @property
    def classes(self) -> int:
        return self.vocab + 1

    @property
    def hidden(self) -> int:
        return self.dim // 2


def output_length(frames: int) -> int:
    return (frames // POOL) // POOL


def _uniform(rng: np.random.Generator, shape, bound: float, dtype) -> Tensor:
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True)


class TemporalConv(Module):
    def __init__(self, dim: int, rng: np.random.Generator, dtype=np.float32):
        bound = 1.0 / np.sqrt(KERNEL * dim)
        self.conv1_w = _uniform(rng, (KERNEL * dim, dim), bound, dtype)
        self.norm1_g, self.norm1_b = ones_param(dim, dtype), zeros_param(dim, dtype)
        self.conv2_w = _uniform(rng, (KERNEL * dim, dim), bound, dtype)
        self.norm2_g, self.norm2_b = ones_param(dim, dtype), zeros_param(dim, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return temporal_conv(x, self)


def conv1d_same(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Stride-1 convolution with edge-replicated padding of KERNEL // 2 on both ends.

    The pyramid passes no bias: the normalisation that follows would cancel it.
    """
    t, d = x.shape
    half = KERNEL // 2
    idx = np.clip(np.arange(t)[:, None] + np.arange(-half, half + 1)[None, :], 0, t - 1)
    windows = nx.take(x, idx, axis=0).reshape(t, KERNEL * d)
    out = windows @ w
    return out if b is None else out + b


def temporal_norm(x: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    """Standardise each channel over the time axis of one sequence, then scale and shift."""
    t = x.shape[0]
    unit, zero = nx.ones((t,), dtype=x.dtype), nx.zeros((t,), dtype=x.dtype)
    return nx.layer_norm(x.T, unit, zero, NORM_EPS).T * gain + bias


def max_pool(x: Tensor) -> Tensor:
    t, d = x.shape
    keep = (t // POOL) * POOL
    return x[:keep].reshape(t // POOL, POOL, d).max(axis=1)


def temporal_conv(x: Tensor, conv: TemporalConv) -> Tensor:
    """[T, d] -> [T // 2 // 2, d]."""
    if x.shape[0] < MIN_FRAMES:
        raise SequenceTooShortError(f"temporal conv needs at least {MIN_FRAMES} frames, got {x.shape[0]}")
    x = temporal_norm(conv1d_same(x, conv.conv1_w), conv.norm1_g, conv.norm1_b)
    x = max_pool(nx.relu(x))
    x = temporal_norm(conv1d_same(x, conv.conv2_w), conv.norm2_g, conv.norm2_b)
    return max_pool(nx.relu(x))


class LSTMDirection(Module):
    """Gate order i, f, g, o along the 4H axis."""

    def __init__(self, inp: int, hidden: int, rng: np.random.Generator, dtype=np.float32):
        bound = 1.0 / np.sqrt(hidden)
        self.w_ih = _uniform(rng, (inp, 4 * hidden), bound, dtype)
        self.w_hh = _uniform(rng, (hidden, 4 * hidden), bound, dtype)
        self.b = _uniform(rng, (4 * hidden,), bound, dtype)

    @property
    def hidden(self) -> int:
        return self.w_hh.shape[0]


def lstm_cell(gx: Tensor, h: Tensor, c: Tensor, w_hh: Tensor, b: Tensor) -> tuple[Tensor, Tensor]:
    """One step given the input projection ``gx`` = x W_ih ([1, 4H]); returns (h, c)."""
    hidden = w_hh.shape[0]
    gates = gx + h @ w_hh + b
    s = nx.sigmoid(gates)
    i, f, o = s[:, :hidden], s[:, hidden : 2 * hidden], s[:, 3 * hidden :]
    g = nx.tanh(gates[:, 2 * hidden : 3 * hidden])
    c = f * c + i * g
    return o * nx.tanh(c), c


def lstm_direction(x: Tensor, cell: LSTMDirection, reverse: bool = False) -> Tensor:
    t = x.shape[0]
    gx = x @ cell.w_ih
    h = nx.zeros((1, cell.hidden), dtype=x.dtype)
    c = nx.zeros((1, cell.hidden), dtype=x.dtype)
    outputs: list[Tensor] = [None] * t  # type: ignore[list-item]
    steps = range(t - 1, -1, -1) if reverse else range(t)
    for step in steps:
        h, c = lstm_cell(gx[step : step + 1], h, c, cell.w_hh, cell.b)
        outputs[step] = h
    return nx.concat(outputs, axis=0)


class BiLSTM(Module):
    def __init__(self, dim: int, layers: int, rng: np.random.Generator, dtype=np.float32):
        hidden = dim // 2
        self.forward_cells = [LSTMDirection(dim, hidden, rng, dtype) for _ in range(layers)]
        self.backward_cells = [LSTMDirection(dim, hidden, rng, dtype) for _ in range(layers)]

    def __call__(self, x: Tensor) -> Tensor:
        return bilstm_forward(x, self)


def bilstm_forward(x: Tensor, lstm: BiLSTM) -> Tensor:
    """Stacked bidirectional layers; each step concatenates [forward, backward] hidden states."""
    for fwd, bwd in zip(lstm.forward_cells, lstm.backward_cells):
        x = nx.concat([lstm_direction(x, fwd), lstm_direction(x, bwd, reverse=True)], axis=1)
    return x


class Classifier(Module):
    def __init__(self, dim: int, classes: int, rng: np.random.Generator, dtype=np.float32):
        self.w = trunc_normal(rng, (dim, classes), dtype=dtype)
        self.b = zeros_param(classes, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return classify(x, self)


def classify(x: Tensor, head: Classifier) -> Tensor:
    """Per-step log-probabilities over blank (index 0) and the glosses."""
    return nx.log_softmax(x @ head.w + head.b, axis=-1)


class SequenceHead(Module):
    def __init__(self, config: SeqConfig, seed: int = 2, dtype=np.float32):
        rng = np.random.default_rng(seed)
        self._config = config
        self.conv = TemporalConv(config.dim, rng, dtype)
        self.lstm = BiLSTM(config.dim, config.lstm_layers, rng, dtype)
        self.classifier = Classifier(config.dim, config.classes, rng, dtype)

    @property
    def config(self) -> SeqConfig:
        return self._config

    def __call__(self, features: Tensor) -> Tensor:
        return self.classifier(self.lstm(self.conv(features)))
