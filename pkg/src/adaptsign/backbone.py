"""
Vision-transformer spatial extractor.

A pre-norm ViT whose blocks optionally accept adaptation hooks: an adapter in
parallel with each of the attention and feed-forward sub-blocks, and a prefix
embedding prepended to the keys and values of every attention head.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import numerics as nx
from .errors import ConfigError, DimensionError, EmptyInputError
from .numerics import Module, Tensor, ones_param, trunc_normal, zeros_param

LN_EPS = 1e-5


@dataclass(frozen=True)
class ViTConfig:
    layers: int
    dim: int
    heads: int
    patch: int
    image: int

    def __post_init__(self):
        for name in ("layers", "dim", "heads", "patch", "image"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.dim % self.heads:
            raise ConfigError(f"dim {self.dim} is not divisible by heads {self.heads}")
        if self.image % self.patch:
            raise ConfigError(f"image side {self.image} is not a multiple of patch {self.patch}")

    @property
    def num_patches(self) -> int:
        return (self.image // self.patch) ** 2

    @property
    def tokens(self) -> int:
        return self.num_patches + 1

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads

    @property
    def ffn_hidden(self) -> int:
        return 4 * self.dim

    @classmethod
    def preset(cls, name: str) -> "ViTConfig":
        try:
            return PRESETS[name]
        except KeyError:
            raise ConfigError(f"unknown backbone preset {name!r}; choose from {sorted(PRESETS)}") from None

    def with_image(self, image: int) -> "ViTConfig":
        return ViTConfig(self.layers, self.dim, self.heads, self.patch, image)


PRESETS = {
    "B16-full": ViTConfig(layers=12, dim=768, heads=12, patch=16, image=224),
    "desk": ViTConfig(layers=4, dim=64, heads=4, patch=8, image=32),
}


class BlockWeights(Module):
    def __init__(self, dim: int, rng: np.random.Generator, dtype=np.float32):
        d, hidden = dim, 4 * dim
        self.ln1_g, self.ln1_b = ones_param(d, dtype), zeros_param(d, dtype)
        self.wq, self.bq = trunc_normal(rng, (d, d), dtype=dtype), zeros_param(d, dtype)
        self.wk, self.bk = trunc_normal(rng, (d, d), dtype=dtype), zeros_param(d, dtype)
        self.wv, self.bv = trunc_normal(rng, (d, d), dtype=dtype), zeros_param(d, dtype)
        self.wo, self.bo = trunc_normal(rng, (d, d), dtype=dtype), zeros_param(d, dtype)
        self.ln2_g, self.ln2_b = ones_param(d, dtype), zeros_param(d, dtype)
        self.fc1_w, self.fc1_b = trunc_normal(rng, (d, hidden), dtype=dtype), zeros_param(hidden, dtype)
        self.fc2_w, self.fc2_b = trunc_normal(rng, (hidden, d), dtype=dtype), zeros_param(d, dtype)

    @property
    def dim(self) -> int:
        return self.wq.shape[0]

    def set_trainable(self, flag: bool) -> None:
        for p in self.parameters():
            p.requires_grad = flag


@dataclass
class BlockHooks:
    """Per-block adaptation: adapters are callables mapping [..., d] -> [..., d]."""

    attn_adapter: Callable[[Tensor], Tensor] | None = None
    ffn_adapter: Callable[[Tensor], Tensor] | None = None
    prefix: Tensor | None = None


@dataclass
class BackboneOutput:
    layers: list[Tensor]
    cls: Tensor
    tokens: Tensor
    attention: list[np.ndarray] = field(default_factory=list)

    @property
    def patches(self) -> Tensor:
        return self.tokens[:, 1:, :]


def attend(q: Tensor, k: Tensor, v: Tensor, prefix: Tensor | None = None, trace: list | None = None) -> Tensor:
    """Scaled dot-product attention over the last two axes.

    ``prefix`` (``[..., m, dk]``) is prepended to both keys and values.
    """
    if prefix is not None and prefix.shape[-2] > 0:
        k = nx.concat([prefix, k], axis=-2)
        v = nx.concat([prefix, v], axis=-2)
    scores = (q @ nx.swapaxes(k, -1, -2)) * (1.0 / math.sqrt(q.shape[-1]))
    weights = nx.softmax(scores, axis=-1)
    if trace is not None:
        trace.append(weights.data)
    return weights @ v


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, n, d = x.shape
    x = x.reshape(*lead, n, heads, d // heads)
    axes = list(range(len(lead))) + [len(lead) + 1, len(lead), len(lead) + 2]
    return x.transpose(axes)


def _merge_heads(x: Tensor) -> Tensor:
    *lead, h, n, dh = x.shape
    axes = list(range(len(lead))) + [len(lead) + 1, len(lead), len(lead) + 2]
    return x.transpose(axes).reshape(*lead, n, h * dh)


def multi_head_attention(
    x: Tensor, w: BlockWeights, heads: int, prefix: Tensor | None = None, trace: list | None = None
) -> Tensor:
    """MSA over tokens of ``x`` ([..., N, d]); ``prefix`` is an [m, d] embedding split across heads."""
    q = _split_heads(x @ w.wq + w.bq, heads)
    k = _split_heads(x @ w.wk + w.bk, heads)
    v = _split_heads(x @ w.wv + w.bv, heads)
    head_prefix = None
    if prefix is not None and prefix.shape[0] > 0:
        m, d = prefix.shape
        head_prefix = prefix.reshape(m, heads, d // heads).transpose(1, 0, 2)
        head_prefix = nx.broadcast_to(head_prefix, k.shape[:-2] + (m, d // heads))
    y = attend(q, k, v, head_prefix, trace)
    return _merge_heads(y) @ w.wo + w.bo


def feed_forward(x: Tensor, w: BlockWeights) -> Tensor:
    return nx.gelu(x @ w.fc1_w + w.fc1_b) @ w.fc2_w + w.fc2_b


def msa_subblock(
    z: Tensor,
    w: BlockWeights,
    heads: int,
    adapter: Callable[[Tensor], Tensor] | None = None,
    prefix: Tensor | None = None,
    trace: list | None = None,
) -> Tensor:
    out = z + multi_head_attention(nx.layer_norm(z, w.ln1_g, w.ln1_b, LN_EPS), w, heads, prefix, trace)
    if adapter is not None:
        out = out + adapter(z)
    return out


def ffn_subblock(z: Tensor, w: BlockWeights, adapter: Callable[[Tensor], Tensor] | None = None) -> Tensor:
    out = z + feed_forward(nx.layer_norm(z, w.ln2_g, w.ln2_b, LN_EPS), w)
    if adapter is not None:
        out = out + adapter(z)
    return out


def _check_hooks(hooks: BlockHooks, dim: int) -> None:
    if hooks.prefix is not None and hooks.prefix.ndim == 2 and hooks.prefix.shape[0] > 0:
        if hooks.prefix.shape[1] != dim:
            raise ConfigError(f"prefix width {hooks.prefix.shape[1]} does not match block dim {dim}")
    for adapter in (hooks.attn_adapter, hooks.ffn_adapter):
        adapter_dim = getattr(adapter, "dim", dim)
        if adapter is not None and adapter_dim != dim:
            raise ConfigError(f"adapter dim {adapter_dim} does not match block dim {dim}")


def vit_block_forward(
    z: Tensor, w: BlockWeights, heads: int, hooks: BlockHooks | None = None, trace: list | None = None
) -> Tensor:
    """One pre-norm block; with hooks, adapters run in parallel and keys/values are prefixed."""
    if z.shape[-1] != w.dim:
        raise DimensionError(f"block expects feature extent {w.dim}, got input {z.shape}")
    if hooks is None:
        return ffn_subblock(msa_subblock(z, w, heads, trace=trace), w)
    _check_hooks(hooks, w.dim)
    z1 = msa_subblock(z, w, heads, hooks.attn_adapter, hooks.prefix, trace)
    return ffn_subblock(z1, w, hooks.ffn_adapter)


class Backbone(Module):
    def __init__(self, config: ViTConfig, seed: int = 0, dtype=np.float32):
        rng = np.random.default_rng(seed)
        c = config
        self._config = c
        self.patch_w = trunc_normal(rng, (3 * c.patch * c.patch, c.dim), dtype=dtype)
        self.patch_b = zeros_param(c.dim, dtype)
        self.cls_token = trunc_normal(rng, (c.dim,), dtype=dtype)
        self.pos_embed = trunc_normal(rng, (c.tokens, c.dim), dtype=dtype)
        self.blocks = [BlockWeights(c.dim, rng, dtype) for _ in range(c.layers)]
        self.ln_post_g = ones_param(c.dim, dtype)
        self.ln_post_b = zeros_param(c.dim, dtype)

    @property
    def config(self) -> ViTConfig:
        return self._config

    def patch_embed(self, frames) -> Tensor:
        """[T, 3, s, s] (or a single [3, s, s] frame) -> [T, n+1, d] tokens."""
        frames = np.asarray(frames.data if isinstance(frames, Tensor) else frames)
        single = frames.ndim == 3
        if single:
            frames = frames[None]
        c = self._config
        if frames.ndim != 4 or frames.shape[1:] != (3, c.image, c.image):
            raise DimensionError(f"expected frames of shape [T, 3, {c.image}, {c.image}], got {frames.shape}")
        t, g, p = frames.shape[0], c.image // c.patch, c.patch
        patches = frames.reshape(t, 3, g, p, g, p).transpose(0, 2, 4, 1, 3, 5).reshape(t, g * g, 3 * p * p)
        patches = Tensor(patches.astype(self.patch_w.dtype, copy=False))
        emb = patches @ self.patch_w + self.patch_b
        cls = nx.broadcast_to(self.cls_token.reshape(1, 1, c.dim), (t, 1, c.dim))
        tokens = nx.concat([cls, emb], axis=1) + self.pos_embed
        return tokens[0] if single else tokens

    def forward(self, frames, hooks: list[BlockHooks] | None = None, record_attention: bool = False) -> BackboneOutput:
        frames = np.asarray(frames.data if isinstance(frames, Tensor) else frames)
        if frames.ndim == 4 and frames.shape[0] == 0:
            raise EmptyInputError("backbone_forward needs at least one frame")
        if hooks is not None and len(hooks) != len(self.blocks):
            raise ConfigError(f"got {len(hooks)} hook sets for {len(self.blocks)} blocks")
        z = self.patch_embed(frames)
        layers, attention = [], []
        for i, w in enumerate(self.blocks):
            trace = [] if record_attention else None
            z = vit_block_forward(z, w, self._config.heads, hooks[i] if hooks else None, trace)
            if trace:
                attention.append(trace[0])
            layers.append(z)
        final = nx.layer_norm(z, self.ln_post_g, self.ln_post_b, LN_EPS)
        return BackboneOutput(layers=layers, cls=final[:, 0, :], tokens=final, attention=attention)

    __call__ = forward


def backbone_forward(backbone: Backbone, frames, hooks: list[BlockHooks] | None = None) -> BackboneOutput:
    return backbone.forward(frames, hooks)


# -- training regimes -------------------------------------------------------

_REGIME_RE = re.compile(r"^(frozen|full|adaptsign|partial)(?:[(\-_ ]?(\d+)\)?)?$")


@dataclass(frozen=True)
class Regime:
    kind: str
    n: int = 0

    def __str__(self) -> str:
        return f"partial({self.n})" if self.kind == "partial" else self.kind

    @classmethod
    def parse(cls, text: "str | Regime") -> "Regime":
        if isinstance(text, Regime):
            return text
        m = _REGIME_RE.match(text.strip().lower())
        if not m:
            raise ConfigError(f"unknown regime {text!r}; use frozen, full, partial(n) or adaptsign")
        kind, n = m.group(1), m.group(2)
        if kind == "partial":
            if n is None:
                raise ConfigError("partial regime needs a layer count, e.g. partial(2)")
            return cls("partial", int(n))
        if n is not None:
            raise ConfigError(f"regime {kind!r} takes no layer count")
        return cls(kind)

    @property
    def uses_adaptation(self) -> bool:
        return self.kind == "adaptsign"


def set_trainability(model: Module, regime: "str | Regime") -> dict[str, bool]:
    """Set ``requires_grad`` on every parameter of ``model`` per ``regime`` and return the mask.

    Parameters are grouped by the leading component of their name: ``backbone/...``
    follows the regime, everything else (adaptation modules, sequence head) is trainable.
    """
    regime = Regime.parse(regime)
    named = list(model.named_parameters())
    layers = sum(1 for name, _ in named if re.match(r"^backbone/blocks\.\d+\.wq$", name))
    if regime.kind == "partial" and not 0 <= regime.n <= layers:
        raise ConfigError(f"partial({regime.n}) exceeds the backbone's {layers} layers")
    first_trainable = layers - regime.n

    mask = {}
    for name, p in named:
        if not name.startswith("backbone/"):
            flag = True
        elif regime.kind == "full":
            flag = True
        elif regime.kind == "partial":
            m = re.match(r"^backbone/blocks\.(\d+)\.", name)
            flag = bool(m) and int(m.group(1)) >= first_trainable
        else:
            flag = False
        p.requires_grad = flag
        mask[name] = flag
    return mask
