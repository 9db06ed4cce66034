"""
Closed-form parameter and FLOP accounting, and the overhead comparison table.

Convention: one multiply-accumulate (MAC) = 2 FLOPs. Elementwise work is
charged with the same per-element costs the tensor library reports to its
instrumented counter (``ELEMENTWISE_COST``), so the formulas below can be
checked against an executed forward pass.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .adaptation import AdaptationConfig, adapter_hidden
from .backbone import ViTConfig
from .model import AdaptSignModel, component_of
from .numerics import ELEMENTWISE_COST as C
from .numerics import Module
from .sequence_head import KERNEL

ADDED = ("adapters", "prefix", "multiscale", "cross_frame")
COMPONENTS = ("backbone",) + ADDED + ("sequence_head",)

# Reported overheads relative to the frozen backbone, in percent.
REPORTED_PERCENT = {"adapters": 0.1, "multiscale": 1.9, "cross_frame": 1.0, "added_total": 3.2}
BANDS = {
    "cross_frame": (0.0, 2.0),
    "multiscale": (0.5, 4.0),
    "added_total": (1.0, 6.0),
}
PROJECTED_KV_FLAG = 10.0


@dataclass
class Cost:
    macs: int = 0
    elementwise: int = 0

    @property
    def flops(self) -> int:
        return 2 * self.macs + self.elementwise

    def __add__(self, other: "Cost") -> "Cost":
        return Cost(self.macs + other.macs, self.elementwise + other.elementwise)

    def __mul__(self, k: int) -> "Cost":
        return Cost(self.macs * k, self.elementwise * k)

    __rmul__ = __mul__


# -- parameter counts -----------------------------------------------------

def count_params(model: Module, trainable_only: bool = False) -> dict[str, int]:
    """Exact parameter counts per accounting component plus ``total``."""
    counts = {c: 0 for c in COMPONENTS}
    for name, p in model.named_parameters():
        if trainable_only and not p.requires_grad:
            continue
        comp = component_of(name)
        counts[comp] = counts.get(comp, 0) + p.size
    counts["total"] = sum(counts[c] for c in COMPONENTS)
    return counts


def param_formula(vit: ViTConfig, adaptation: AdaptationConfig | None, vocab: int | None = None) -> dict[str, int]:
    """Parameter counts from layer shapes alone (no weights allocated)."""
    L, d, p, n = vit.layers, vit.dim, vit.patch, vit.num_patches
    block = 4 * (d * d + d) + 4 * d + (d * 4 * d + 4 * d) + (4 * d * d + d)
    counts = {c: 0 for c in COMPONENTS}
    counts["backbone"] = 3 * p * p * d + d + d + (n + 1) * d + L * block + 2 * d
    if adaptation is not None:
        hid = adapter_hidden(d, adaptation.ratio)
        counts["adapters"] = 2 * L * (d * hid + hid + hid * d + d)
        m = adaptation.prefix_length
        counts["prefix"] = 0 if m == 0 else (L if adaptation.prefix_mode == "independent" else 1) * m * d
        per_layer = 2 * d + (d * d + d) + 2 * d + 2 * d + (d * 4 * d + 4 * d) + (4 * d * d + d)
        if adaptation.project_kv:
            per_layer += 2 * (d * d + d)
        counts["multiscale"] = d + L * per_layer + 2 * d + d * d + d
        counts["cross_frame"] = 4 * d
    if vocab is not None:
        h = d // 2
        conv = 2 * (KERNEL * d * d + 2 * d)
        lstm = 2 * 2 * (d * 4 * h + h * 4 * h + 4 * h)
        counts["sequence_head"] = conv + lstm + d * (vocab + 1) + vocab + 1
    counts["total"] = sum(counts[c] for c in COMPONENTS)
    return counts


# -- FLOP formulas --------------------------------------------------------

def patch_embed_cost(vit: ViTConfig) -> Cost:
    n, d, p = vit.num_patches, vit.dim, vit.patch
    return Cost(n * 3 * p * p * d, n * d + (n + 1) * d)


def block_attention_cost(vit: ViTConfig) -> Cost:
    """Token-mixing part of one block: QK^T, scaling, softmax and AV (quadratic in tokens)."""
    N, d, h = vit.tokens, vit.dim, vit.heads
    return Cost(2 * N * N * d, h * N * N * (1 + C["softmax"]))


def block_cost(vit: ViTConfig) -> Cost:
    N, d = vit.tokens, vit.dim
    ln = C["layer_norm"] * N * d
    attn = Cost(4 * N * d * d, 3 * N * d + N * d + N * d) + block_attention_cost(vit)
    ffn = Cost(8 * N * d * d, 4 * N * d + C["gelu"] * 4 * N * d + N * d + N * d)
    return Cost(0, 2 * ln) + attn + ffn


def backbone_cost(vit: ViTConfig) -> Cost:
    """Per-frame cost of the plain backbone forward."""
    return patch_embed_cost(vit) + block_cost(vit) * vit.layers + Cost(0, C["layer_norm"] * vit.tokens * vit.dim)


def adapter_cost(vit: ViTConfig, ratio: float) -> Cost:
    """One adapter over all tokens of one frame, including its residual add."""
    N, d = vit.tokens, vit.dim
    hid = adapter_hidden(d, ratio)
    return Cost(2 * N * d * hid, N * hid + C["gelu"] * N * hid + N * d + N * d)


def prefix_cost(vit: ViTConfig, m: int) -> Cost:
    """Extra key/value columns from an m-long prefix in one block."""
    N, d, h = vit.tokens, vit.dim, vit.heads
    return Cost(2 * N * m * d, h * N * m * (1 + C["softmax"]))


def multiscale_key_cost(vit: ViTConfig, project_kv: bool = False) -> Cost:
    """Token-dependent part of one aggregation step (key normalisation, projections, attention)."""
    N, d, h = vit.tokens, vit.dim, vit.heads
    cost = Cost(2 * N * d, C["layer_norm"] * N * d + h * N * (1 + C["softmax"]))
    if project_kv:
        cost += Cost(2 * N * d * d, 2 * N * d)
    return cost


def multiscale_step_cost(vit: ViTConfig, project_kv: bool = False) -> Cost:
    d = vit.dim
    query = Cost(d * d, C["layer_norm"] * d + d)
    mlp = Cost(8 * d * d, C["layer_norm"] * d + 4 * d + C["gelu"] * 4 * d + d + d)
    return query + multiscale_key_cost(vit, project_kv) + Cost(0, d) + mlp


def multiscale_cost(vit: ViTConfig, project_kv: bool = False) -> Cost:
    """Per frame: L aggregation steps, the output head, and the fusion add."""
    d = vit.dim
    head = Cost(d * d, C["layer_norm"] * d + d)
    return multiscale_step_cost(vit, project_kv) * vit.layers + head + Cost(0, d)


def cross_frame_cost(vit: ViTConfig, tau: int, direction: str = "bidirectional") -> Cost:
    n, d = vit.num_patches, vit.dim
    w = 2 * tau + 1 if direction == "bidirectional" else tau + 1
    ln = C["layer_norm"] * (d + n * d)
    return Cost(2 * w * n * d, ln + (C["sigmoid"] + 2) * w * n + 2 * d)


def sequence_head_cost(dim: int, vocab: int, frames: int) -> Cost:
    """Whole-sequence cost of conv pyramid, BiLSTM and classifier for ``frames`` inputs."""
    d, h, classes = dim, dim // 2, vocab + 1
    cost = Cost()
    t = frames
    for _ in range(2):
        # temporal norm with its gain and bias, then relu
        cost += Cost(t * KERNEL * d * d, (3 + C["layer_norm"]) * t * d)
        cost += Cost(0, C["max"] * (t // 2) * 2 * d)
        t //= 2
    steps = t
    per_step = Cost(h * 4 * h, 8 * h + C["sigmoid"] * 4 * h + C["tanh"] * 2 * h + 4 * h)
    direction = Cost(steps * d * 4 * h) + per_step * steps
    cost += direction * 4
    cost += Cost(steps * d * classes, steps * classes + C["log_softmax"] * steps * classes)
    return cost


@dataclass
class CostReport:
    """Per-component parameter counts and forward costs, with ratios against the backbone."""

    params: dict[str, int]
    costs: dict[str, Cost]
    frames: int
    per_frame: bool
    extra: dict[str, Cost] = field(default_factory=dict)

    @property
    def flops(self) -> dict[str, float]:
        scale = self.frames if self.per_frame else 1
        return {k: v.flops / scale for k, v in self.costs.items()}

    @property
    def macs(self) -> dict[str, float]:
        scale = self.frames if self.per_frame else 1
        return {k: v.macs / scale for k, v in self.costs.items()}

    def ratio(self, component: str) -> float:
        """FLOPs of ``component`` as a percentage of the backbone's."""
        flops = self.flops
        if component == "added_total":
            return 100.0 * sum(flops[c] for c in ADDED) / flops["backbone"]
        return 100.0 * flops[component] / flops["backbone"]

    def param_ratio(self, component: str) -> float:
        if component == "added_total":
            return 100.0 * sum(self.params[c] for c in ADDED) / self.params["backbone"]
        return 100.0 * self.params[component] / self.params["backbone"]

    def to_dict(self) -> dict:
        return {
            "convention": "1 MAC = 2 FLOPs",
            "frames": self.frames,
            "per_frame": self.per_frame,
            "params": dict(self.params),
            "flops": self.flops,
            "macs": self.macs,
            "flop_ratio_pct": {c: self.ratio(c) for c in ADDED + ("sequence_head", "added_total")},
            "param_ratio_pct": {c: self.param_ratio(c) for c in ADDED + ("sequence_head", "added_total")},
        }


def count_flops(
    vit: ViTConfig,
    adaptation: AdaptationConfig | None = None,
    frames: int = 16,
    per_frame: bool = True,
    vocab: int = 1000,
) -> CostReport:
    """Analytic costs of a forward pass over ``frames`` frames."""
    adaptation = adaptation if adaptation is not None else AdaptationConfig()
    L = vit.layers
    costs = {
        "backbone": backbone_cost(vit) * frames,
        "adapters": adapter_cost(vit, adaptation.ratio) * (2 * L * frames),
        "prefix": prefix_cost(vit, adaptation.prefix_length) * (L * frames),
        "multiscale": multiscale_cost(vit, adaptation.project_kv) * frames,
        "cross_frame": cross_frame_cost(vit, adaptation.tau, adaptation.direction) * frames,
        "sequence_head": sequence_head_cost(vit.dim, vocab, frames),
    }
    extra = {"backbone_attention": block_attention_cost(vit) * (L * frames)}
    return CostReport(param_formula(vit, adaptation, vocab), costs, frames, per_frame, extra)


# -- overhead comparison --------------------------------------------------

def overhead_report(cost: CostReport) -> tuple[dict, str]:
    """Compare component FLOP ratios with the reported figures; returns (json-able dict, text table)."""
    rows = []
    for comp in ("adapters", "prefix", "multiscale", "cross_frame", "added_total"):
        ratio = cost.ratio(comp)
        band = BANDS.get(comp)
        reported = REPORTED_PERCENT.get(comp)
        if band is not None:
            status = "pass" if band[0] <= ratio <= band[1] else "FAIL"
        elif reported is not None:
            status = "flagged"
        else:
            status = "info"
        note = ""
        if comp == "adapters":
            note = "reported figure not reproducible by FLOP or parameter counting"
        if comp == "multiscale" and ratio > PROJECTED_KV_FLAG:
            status, note = "flagged", "inconsistent with the reported figure (projected keys/values)"
        rows.append(
            {
                "component": comp,
                "flop_ratio_pct": ratio,
                "param_ratio_pct": cost.param_ratio(comp),
                "reported_pct": reported,
                "band_pct": list(band) if band else None,
                "status": status,
                "note": note,
            }
        )
    machine = {"convention": "1 MAC = 2 FLOPs", "backbone_flops": cost.flops["backbone"], "rows": rows}

    lines = [
        "overhead vs frozen backbone (1 MAC = 2 FLOPs)",
        f"{'component':<14}{'FLOPs %':>10}{'params %':>10}{'reported %':>11}  {'band %':<13}{'status':<8}",
    ]
    for r in rows:
        reported = "-" if r["reported_pct"] is None else f"{r['reported_pct']:.1f}"
        band = "-" if r["band_pct"] is None else f"[{r['band_pct'][0]:g}, {r['band_pct'][1]:g}]"
        line = f"{r['component']:<14}{r['flop_ratio_pct']:>10.3f}{r['param_ratio_pct']:>10.3f}{reported:>11}  {band:<13}{r['status']:<8}"
        if r["note"]:
            line += f"  {r['note']}"
        lines.append(line)
    return machine, "\n".join(lines)


def report_json(cost: CostReport) -> str:
    machine, _ = overhead_report(cost)
    return json.dumps({"cost": cost.to_dict(), "overhead": machine}, indent=2, sort_keys=True)


def fit_exponent(xs, ys) -> float:
    """Least-squares slope of log y against log x."""
    slope, _ = np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)
    return float(slope)


def scaling_exponents(vit: ViTConfig, adaptation: AdaptationConfig | None = None, patches=(16, 49, 196)) -> dict[str, float]:
    """Power-law exponents of per-frame FLOPs against patch count n, per component.

    The image side is varied so that n takes each value in ``patches``.
    """
    series: dict[str, list[float]] = {}
    for n in patches:
        side = int(round(np.sqrt(n))) * vit.patch
        cfg = vit.with_image(side)
        rep = count_flops(cfg, adaptation, frames=1)
        for comp in ADDED:
            series.setdefault(comp, []).append(rep.flops[comp])
        series.setdefault("backbone_attention", []).append(rep.extra["backbone_attention"].flops)
    return {comp: fit_exponent(patches, ys) for comp, ys in series.items()}


# -- instrumented measurement ---------------------------------------------

def instrumented_costs(model: AdaptSignModel, frames: np.ndarray) -> dict[str, Cost]:
    """Execute each component under the tensor library's FLOP counter."""
    from . import numerics as nx
    from .backbone import BlockHooks

    out: dict[str, Cost] = {}
    t = frames.shape[0]
    with nx.no_grad():
        with nx.count_flops() as c:
            plain = model.backbone.forward(frames)
        out["backbone"] = Cost(c.macs, c.elementwise)
        if model.adaptation is not None:
            ad = model.adaptation
            hooks = ad.hooks()
            only_adapters = [BlockHooks(h.attn_adapter, h.ffn_adapter, None) for h in hooks]
            only_prefix = [BlockHooks(None, None, h.prefix) for h in hooks]
            with nx.count_flops() as c:
                model.backbone.forward(frames, only_adapters)
            out["adapters"] = Cost(c.macs, c.elementwise) + Cost(-out["backbone"].macs, -out["backbone"].elementwise)
            with nx.count_flops() as c:
                model.backbone.forward(frames, only_prefix)
            out["prefix"] = Cost(c.macs, c.elementwise) + Cost(-out["backbone"].macs, -out["backbone"].elementwise)
            with nx.count_flops() as c:
                plain.cls + ad.multiscale(plain.layers, t)
            out["multiscale"] = Cost(c.macs, c.elementwise)
            with nx.count_flops() as c:
                ad.cross_frame(plain.cls, plain.patches)
            out["cross_frame"] = Cost(c.macs, c.elementwise)
        with nx.count_flops() as c:
            model.seq(plain.cls)
        out["sequence_head"] = Cost(c.macs, c.elementwise)
    return out
