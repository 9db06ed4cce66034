"""The full recognizer: backbone, optional adaptation modules, sequence head."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .adaptation import AdaptationConfig, AdaptationModules
from .backbone import Backbone, BackboneOutput, ViTConfig
from .numerics import Module, Tensor
from .sequence_head import SeqConfig, SequenceHead

COMPONENTS = ("backbone", "adaptation", "seq")


@dataclass
class ModelSpec:
    """Everything needed to rebuild a model with freshly initialised weights."""

    vit: ViTConfig
    vocab: int
    adaptation: AdaptationConfig | None = None
    backbone_seed: int = 0
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "vit": {k: getattr(self.vit, k) for k in ("layers", "dim", "heads", "patch", "image")},
            "vocab": self.vocab,
            "adaptation": None if self.adaptation is None else self.adaptation.to_dict(),
            "backbone_seed": self.backbone_seed,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        adaptation = d.get("adaptation")
        return cls(
            vit=ViTConfig(**d["vit"]),
            vocab=int(d["vocab"]),
            adaptation=None if adaptation is None else AdaptationConfig(**adaptation),
            backbone_seed=int(d.get("backbone_seed", 0)),
            seed=int(d.get("seed", 0)),
        )


class AdaptSignModel(Module):
    """Parameter names are prefixed ``backbone/``, ``adaptation/`` or ``seq/``."""

    def __init__(self, spec: ModelSpec, dtype=np.float32):
        self._spec = spec
        vit = spec.vit
        self.backbone = Backbone(vit, seed=spec.backbone_seed, dtype=dtype)
        self.adaptation = (
            AdaptationModules(vit.layers, vit.dim, vit.heads, spec.adaptation, seed=10_000 + spec.seed, dtype=dtype)
            if spec.adaptation is not None
            else None
        )
        self.seq = SequenceHead(SeqConfig(vit.dim, spec.vocab), seed=20_000 + spec.seed, dtype=dtype)

    @property
    def spec(self) -> ModelSpec:
        return self._spec

    @property
    def vocab(self) -> int:
        return self._spec.vocab

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for comp in COMPONENTS:
            module = getattr(self, comp)
            if module is not None:
                yield from module.named_parameters(f"{prefix}{comp}/")

    def frame_features(
        self, frames, maps: list | None = None, record_attention: bool = False
    ) -> tuple[Tensor, BackboneOutput]:
        """Per-frame features [T, d]: the class token, or the fused adapted features."""
        hooks = self.adaptation.hooks() if self.adaptation is not None else None
        out = self.backbone.forward(frames, hooks, record_attention=record_attention)
        if self.adaptation is None:
            return out.cls, out
        return self.adaptation.frame_features(out, maps), out

    def forward(self, frames) -> Tensor:
        """Log-probability lattice [T', V + 1]."""
        features, _ = self.frame_features(frames)
        return self.seq(features)

    __call__ = forward


def component_of(name: str) -> str:
    """Accounting bucket for a parameter name."""
    head, _, rest = name.partition("/")
    if head == "backbone":
        return "backbone"
    if head == "seq":
        return "sequence_head"
    if rest.startswith(("attn_adapters", "ffn_adapters")):
        return "adapters"
    if rest.startswith("prefix"):
        return "prefix"
    if rest.startswith("multiscale"):
        return "multiscale"
    if rest.startswith("cross_frame"):
        return "cross_frame"
    return head
