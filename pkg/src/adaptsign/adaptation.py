"""
Lightweight modules that adapt a frozen ViT to sign video.

* ``Adapter``: bottleneck MLP run in parallel with the attention and FFN
  sub-blocks; its output layer starts at zero so the block is unchanged at init.
* ``PrefixBank``: learnable embeddings prepended to keys and values.
* ``MultiscaleAggregator``: one learned token that cross-attends to the tokens
  of every backbone layer in turn, followed by a per-layer MLP.
* ``CrossFrameAttention``: sigmoid-gated pooling of neighbouring frames' patch
  tokens into each frame's class token.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import numerics as nx
from .backbone import (
    LN_EPS,
    BackboneOutput,
    BlockHooks,
    BlockWeights,
    _split_heads,
    attend,
    ffn_subblock,
    msa_subblock,
)
from .errors import ConfigError, DimensionError, EmptyInputError
from .numerics import Module, Tensor, ones_param, trunc_normal, zeros_param

DIRECTIONS = ("bidirectional", "unidirectional")
PREFIX_MODES = ("independent", "shared")


@dataclass(frozen=True)
class AdaptationConfig:
    ratio: float = 0.25
    prefix_length: int = 8
    prefix_mode: str = "independent"
    tau: int = 2
    direction: str = "bidirectional"
    project_kv: bool = False

    def __post_init__(self):
        if not 0 < self.ratio <= 1:
            raise ConfigError(f"adapter ratio must lie in (0, 1], got {self.ratio}")
        if self.prefix_length < 0:
            raise ConfigError(f"prefix length must be >= 0, got {self.prefix_length}")
        if self.prefix_mode not in PREFIX_MODES:
            raise ConfigError(f"prefix mode must be one of {PREFIX_MODES}, got {self.prefix_mode!r}")
        if self.tau < 0:
            raise ConfigError(f"cross-frame radius must be >= 0, got {self.tau}")
        if self.direction not in DIRECTIONS:
            raise ConfigError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def adapter_hidden(dim: int, ratio: float) -> int:
    return max(1, math.ceil(ratio * dim - 1e-9))


class Adapter(Module):
    def __init__(self, dim: int, ratio: float, rng: np.random.Generator, dtype=np.float32):
        hidden = adapter_hidden(dim, ratio)
        self.fc1_w = trunc_normal(rng, (dim, hidden), dtype=dtype)
        self.fc1_b = zeros_param(hidden, dtype)
        self.fc2_w = zeros_param((hidden, dim), dtype)
        self.fc2_b = zeros_param(dim, dtype)

    @property
    def dim(self) -> int:
        return self.fc1_w.shape[0]

    @property
    def hidden(self) -> int:
        return self.fc1_w.shape[1]

    def __call__(self, z: Tensor) -> Tensor:
        return adapter_forward(z, self)


def adapter_forward(z: Tensor, a: Adapter) -> Tensor:
    """fc2(gelu(fc1(z))) over the last axis."""
    return nx.gelu(z @ a.fc1_w + a.fc1_b) @ a.fc2_w + a.fc2_b


class PrefixBank(Module):
    """Per-layer [m, d] embeddings; ``shared`` mode stores one and reuses it for every layer."""

    def __init__(self, layers: int, dim: int, length: int, mode: str, rng: np.random.Generator, dtype=np.float32):
        if mode not in PREFIX_MODES:
            raise ConfigError(f"prefix mode must be one of {PREFIX_MODES}, got {mode!r}")
        self._mode = mode
        self._layers = layers
        count = 0 if length == 0 else (layers if mode == "independent" else 1)
        self.embeddings = [trunc_normal(rng, (length, dim), dtype=dtype) for _ in range(count)]

    @property
    def length(self) -> int:
        return self.embeddings[0].shape[0] if self.embeddings else 0

    def for_layer(self, layer: int) -> Tensor | None:
        if not self.embeddings:
            return None
        return self.embeddings[layer if self._mode == "independent" else 0]


def prefix_attention(Q: Tensor, K: Tensor, V: Tensor, P: Tensor | None) -> Tensor:
    """softmax(Q [P;K]^T / sqrt(d)) [P;V] for a single head."""
    if Q.shape[-1] != K.shape[-1] or K.shape[-1] != V.shape[-1]:
        raise DimensionError(f"column extents differ: Q {Q.shape}, K {K.shape}, V {V.shape}")
    if P is not None and P.shape[0] > 0 and P.shape[-1] != K.shape[-1]:
        raise DimensionError(f"prefix width {P.shape[-1]} does not match key width {K.shape[-1]}")
    return attend(Q, K, V, P)


def adapted_msa(z: Tensor, block: BlockWeights, heads: int, adapter: Adapter | None, prefix: Tensor | None) -> Tensor:
    """z + MSA(LN(z)) with prefixed keys/values, plus the adapter branch reading z."""
    return msa_subblock(z, block, heads, adapter, prefix)


def adapted_ffn(z: Tensor, block: BlockWeights, adapter: Adapter | None) -> Tensor:
    return ffn_subblock(z, block, adapter)


class MultiscaleLayer(Module):
    def __init__(self, dim: int, project_kv: bool, rng: np.random.Generator, dtype=np.float32):
        hidden = 4 * dim
        self.ln_q_g, self.ln_q_b = ones_param(dim, dtype), zeros_param(dim, dtype)
        self.wq, self.bq = trunc_normal(rng, (dim, dim), dtype=dtype), zeros_param(dim, dtype)
        self.ln_kv_g, self.ln_kv_b = ones_param(dim, dtype), zeros_param(dim, dtype)
        if project_kv:
            self.wk, self.bk = trunc_normal(rng, (dim, dim), dtype=dtype), zeros_param(dim, dtype)
            self.wv, self.bv = trunc_normal(rng, (dim, dim), dtype=dtype), zeros_param(dim, dtype)
        self.ln_mlp_g, self.ln_mlp_b = ones_param(dim, dtype), zeros_param(dim, dtype)
        self.fc1_w, self.fc1_b = trunc_normal(rng, (dim, hidden), dtype=dtype), zeros_param(hidden, dtype)
        self.fc2_w, self.fc2_b = trunc_normal(rng, (hidden, dim), dtype=dtype), zeros_param(dim, dtype)

    @property
    def projects_kv(self) -> bool:
        return hasattr(self, "wk")


def multiscale_step(x: Tensor, z: Tensor, layer: MultiscaleLayer, heads: int, trace: list | None = None) -> Tensor:
    """Cross-attend the per-frame token ``x`` [T, d] to all tokens of ``z`` [T, N, d], then MLP.

    Without key/value projections the keys and values are the layer-normed tokens.
    """
    t, d = x.shape
    q = nx.layer_norm(x, layer.ln_q_g, layer.ln_q_b, LN_EPS) @ layer.wq + layer.bq
    kv = nx.layer_norm(z, layer.ln_kv_g, layer.ln_kv_b, LN_EPS)
    if layer.projects_kv:
        k, v = kv @ layer.wk + layer.bk, kv @ layer.wv + layer.bv
    else:
        k = v = kv
    q = q.reshape(t, heads, 1, d // heads)
    y = attend(q, _split_heads(k, heads), _split_heads(v, heads), trace=trace)
    x = x + y.reshape(t, d)
    h = nx.layer_norm(x, layer.ln_mlp_g, layer.ln_mlp_b, LN_EPS)
    return x + nx.gelu(h @ layer.fc1_w + layer.fc1_b) @ layer.fc2_w + layer.fc2_b


class MultiscaleAggregator(Module):
    """A learned token refined against every layer's tokens, then a zero-initialised output head."""

    def __init__(self, layers: int, dim: int, heads: int, project_kv: bool, rng: np.random.Generator, dtype=np.float32):
        self._heads = heads
        self.token = trunc_normal(rng, (dim,), dtype=dtype)
        self.layers = [MultiscaleLayer(dim, project_kv, rng, dtype) for _ in range(layers)]
        self.ln_out_g, self.ln_out_b = ones_param(dim, dtype), zeros_param(dim, dtype)
        self.out_w, self.out_b = zeros_param((dim, dim), dtype), zeros_param(dim, dtype)

    def aggregate(self, layer_tokens: list[Tensor], frames: int) -> Tensor:
        """Run one step per backbone layer in order; returns the final token per frame [T, d]."""
        d = self.token.shape[0]
        x = nx.broadcast_to(self.token.reshape(1, d), (frames, d))
        for z, layer in zip(layer_tokens, self.layers):
            x = multiscale_step(x, z, layer, self._heads)
        return x

    def __call__(self, layer_tokens: list[Tensor], frames: int) -> Tensor:
        x = self.aggregate(layer_tokens, frames)
        return nx.layer_norm(x, self.ln_out_g, self.ln_out_b, LN_EPS) @ self.out_w + self.out_b


class CrossFrameAttention(Module):
    def __init__(self, dim: int, tau: int, direction: str = "bidirectional", dtype=np.float32):
        if tau < 0:
            raise ConfigError(f"cross-frame radius must be >= 0, got {tau}")
        if direction not in DIRECTIONS:
            raise ConfigError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
        self._tau = tau
        self._direction = direction
        self._forced_gate: float | None = None
        self.ln_q_g, self.ln_q_b = ones_param(dim, dtype), zeros_param(dim, dtype)
        self.ln_k_g, self.ln_k_b = ones_param(dim, dtype), zeros_param(dim, dtype)

    @property
    def tau(self) -> int:
        return self._tau

    @property
    def direction(self) -> str:
        return self._direction

    @property
    def forced_gate(self) -> float | None:
        return self._forced_gate

    def force_gate(self, value: float | None) -> None:
        """Pin every gate value A to ``value`` (None restores the learned gate); for ablations and checks."""
        self._forced_gate = None if value is None else float(value)

    @property
    def window(self) -> int:
        return 2 * self._tau + 1 if self._direction == "bidirectional" else self._tau + 1

    def neighbourhood(self, frames: int) -> tuple[np.ndarray, np.ndarray]:
        """Clamped neighbour indices [T, W] and a validity mask; out-of-range slots repeat an edge frame."""
        lo = -self._tau if self._direction == "bidirectional" else 0
        offsets = np.arange(lo, self._tau + 1)
        raw = np.arange(frames)[:, None] + offsets[None, :]
        valid = (raw >= 0) & (raw < frames)
        return np.clip(raw, 0, frames - 1), valid

    def __call__(self, x_cls: Tensor, patches: Tensor, maps: list | None = None) -> Tensor:
        return cross_frame_attention(x_cls, patches, self, maps)


def cross_frame_attention(x_cls: Tensor, patches: Tensor, cf: CrossFrameAttention, maps: list | None = None) -> Tensor:
    """x_cls + mean over neighbouring patches of (sigmoid(LN(x_cls) . LN(patch)) - 0.5) * patch.

    ``x_cls`` is [T, d] and ``patches`` [T, n, d]. Neighbourhoods are truncated at
    the sequence ends and the mean runs over the patches that exist. When ``maps``
    is a list, the per-frame gate values (A, before the 0.5 shift) are appended as
    a [T, W, n] array, with NaN marking slots outside the sequence.
    """
    if x_cls.ndim != 2 or x_cls.shape[0] == 0:
        raise EmptyInputError(f"cross-frame attention needs [T>=1, d] class tokens, got {x_cls.shape}")
    t, d = x_cls.shape
    n = patches.shape[1]
    if patches.shape != (t, n, d):
        raise DimensionError(f"patches {patches.shape} do not match class tokens {x_cls.shape}")
    idx, valid = cf.neighbourhood(t)
    w = idx.shape[1]

    q = nx.layer_norm(x_cls, cf.ln_q_g, cf.ln_q_b, LN_EPS)
    keys = nx.layer_norm(patches, cf.ln_k_g, cf.ln_k_b, LN_EPS)
    k_nb = nx.take(keys, idx, axis=0).reshape(t, w * n, d)
    x_nb = nx.take(patches, idx, axis=0).reshape(t, w * n, d)
    gate = nx.sigmoid(k_nb @ q.reshape(t, d, 1))
    if cf.forced_gate is not None:
        gate = nx.as_tensor(np.full(gate.shape, cf.forced_gate, dtype=x_cls.dtype))
    if maps is not None:
        a = gate.data.reshape(t, w, n).astype(np.float64)
        a[~valid] = np.nan
        maps.append(a)
    mask = np.repeat(valid, n, axis=1)[:, :, None].astype(x_cls.dtype)
    weights = (gate - 0.5) * mask
    count = (valid.sum(axis=1) * n).astype(x_cls.dtype)[:, None]
    pooled = (nx.swapaxes(weights, 1, 2) @ x_nb).reshape(t, d) / count
    return x_cls + pooled


def fuse_frame_features(cross_frame: Tensor, multiscale: Tensor) -> Tensor:
    if cross_frame.shape != multiscale.shape:
        raise DimensionError(f"cannot fuse features of shapes {cross_frame.shape} and {multiscale.shape}")
    return cross_frame + multiscale


class AdaptationModules(Module):
    """All added modules for one backbone; ``hooks()`` feeds the adapters and prefixes to the blocks."""

    def __init__(self, layers: int, dim: int, heads: int, config: AdaptationConfig, seed: int = 1, dtype=np.float32):
        rng = np.random.default_rng(seed)
        self._config = config
        self.attn_adapters = [Adapter(dim, config.ratio, rng, dtype) for _ in range(layers)]
        self.ffn_adapters = [Adapter(dim, config.ratio, rng, dtype) for _ in range(layers)]
        self.prefix = PrefixBank(layers, dim, config.prefix_length, config.prefix_mode, rng, dtype)
        self.multiscale = MultiscaleAggregator(layers, dim, heads, config.project_kv, rng, dtype)
        self.cross_frame = CrossFrameAttention(dim, config.tau, config.direction, dtype)

    @property
    def config(self) -> AdaptationConfig:
        return self._config

    def hooks(self) -> list[BlockHooks]:
        return [
            BlockHooks(attn, ffn, self.prefix.for_layer(i))
            for i, (attn, ffn) in enumerate(zip(self.attn_adapters, self.ffn_adapters))
        ]

    def frame_features(self, out: BackboneOutput, maps: list | None = None) -> Tensor:
        frames = out.cls.shape[0]
        x_hat = self.cross_frame(out.cls, out.patches, maps)
        return fuse_frame_features(x_hat, self.multiscale(out.layers, frames))
