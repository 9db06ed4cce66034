import json

import numpy as np
import pytest

from adaptsign.accounting import (
    ADDED,
    count_flops,
    count_params,
    fit_exponent,
    instrumented_costs,
    overhead_report,
    param_formula,
    report_json,
    scaling_exponents,
)
from adaptsign.adaptation import AdaptationConfig
from adaptsign.backbone import ViTConfig, set_trainability
from adaptsign.model import AdaptSignModel, ModelSpec

DESK = ViTConfig.preset("desk")
B16 = ViTConfig.preset("B16-full")


@pytest.mark.parametrize(
    "adaptation",
    [AdaptationConfig(), AdaptationConfig(ratio=0.5, prefix_length=3, prefix_mode="shared", tau=1, direction="unidirectional", project_kv=True)],
    ids=["defaults", "variant"],
)
def test_instrumented_costs_equal_formulas(adaptation):
    model = AdaptSignModel(ModelSpec(DESK, 6, adaptation))
    frames = np.random.default_rng(0).random((16, 3, 32, 32)).astype(np.float32)
    measured = instrumented_costs(model, frames)
    analytic = count_flops(DESK, adaptation, frames=16, per_frame=False, vocab=6).costs
    for comp, cost in measured.items():
        assert cost == analytic[comp], comp


def test_param_counts_equal_formula():
    for adaptation in (AdaptationConfig(), AdaptationConfig(prefix_mode="shared", project_kv=True), None):
        model = AdaptSignModel(ModelSpec(DESK, 6, adaptation))
        assert count_params(model) == param_formula(DESK, adaptation, vocab=6)


def test_frozen_trainable_counts_exclude_backbone():
    model = AdaptSignModel(ModelSpec(DESK, 6, None))
    set_trainability(model, "frozen")
    counts = count_params(model, trainable_only=True)
    assert counts["backbone"] == 0
    assert counts["sequence_head"] > 0


def test_b16_backbone_size_and_cost():
    report = count_flops(B16, AdaptationConfig())
    assert report.params["backbone"] == pytest.approx(85.6e6, rel=0.03)
    assert report.macs["backbone"] == pytest.approx(17.6e9, rel=0.10)


def test_one_b16_adapter():
    counts = param_formula(B16, AdaptationConfig())
    assert counts["adapters"] == 2 * 12 * 295_872


def test_prefix_is_a_small_fraction():
    report = count_flops(B16, AdaptationConfig())
    extra_columns = report.costs["prefix"].macs / report.extra["backbone_attention"].macs
    assert extra_columns == pytest.approx(8 / 197)
    assert report.ratio("prefix") < 1.0


def test_doubling_patches():
    small, large = (count_flops(B16.with_image(s), AdaptationConfig(), frames=1) for s in (160, 224))
    # 100 vs 196 patches: close to a doubling
    n_ratio = large.extra["backbone_attention"].flops / small.extra["backbone_attention"].flops
    assert n_ratio > 3.5
    for comp in ADDED:
        assert large.flops[comp] / small.flops[comp] <= 2.0


def test_scaling_exponents():
    exps = scaling_exponents(B16, AdaptationConfig())
    assert all(exps[c] <= 1.1 for c in ADDED)
    assert exps["backbone_attention"] >= 1.8


def test_fit_exponent_recovers_power_law():
    xs = np.array([16, 49, 196])
    assert fit_exponent(xs, 3.0 * xs**1.5) == pytest.approx(1.5)


def test_projected_keys_are_flagged():
    machine, text = overhead_report(count_flops(B16, AdaptationConfig(project_kv=True)))
    row = next(r for r in machine["rows"] if r["component"] == "multiscale")
    assert row["flop_ratio_pct"] > 10
    assert row["status"] == "flagged"
    assert "inconsistent" in text


def test_report_flags_adapter_figure_and_states_convention():
    machine, text = overhead_report(count_flops(B16, AdaptationConfig()))
    adapters = next(r for r in machine["rows"] if r["component"] == "adapters")
    assert adapters["status"] == "flagged"
    assert "1 MAC = 2 FLOPs" in text
    payload = json.loads(report_json(count_flops(B16, AdaptationConfig())))
    assert payload["cost"]["convention"] == "1 MAC = 2 FLOPs"
    assert set(payload["cost"]["flop_ratio_pct"]) >= set(ADDED) | {"added_total"}
