import csv
import json

import numpy as np
import pytest

from adaptsign.backbone import Backbone
from adaptsign.checkpoint import load_checkpoint, load_tensors, save_checkpoint
from adaptsign.data import SyntheticSpec, generate_dataset
from adaptsign.errors import CompatibilityError, ConfigError, DataConfigError
from adaptsign.training import (
    METRIC_COLUMNS,
    ExperimentConfig,
    build_model,
    comparison_medians,
    comparison_table,
    evaluate,
    overfit_preset,
    run_comparison,
    train,
)


def quick(**kw):
    return ExperimentConfig(**{"epochs": 1, "lr": 1e-3, **kw})


def backbone_state(result_dir):
    model, _ = load_checkpoint(result_dir / "checkpoint")
    return {k: v for k, v in model.state_dict().items() if k.startswith("backbone/")}


def pristine_backbone(config):
    fresh = Backbone(config.vit(), seed=config.backbone_seed)
    return {f"backbone/{k}": v for k, v in fresh.state_dict().items()}


@pytest.mark.parametrize("regime", ["frozen", "adaptsign"])
def test_frozen_backbones_stay_put(tiny_data, tmp_path, regime):
    config = quick(regime=regime)
    train(config, tiny_data, tmp_path)
    after, before = backbone_state(tmp_path), pristine_backbone(config)
    assert after.keys() == before.keys()
    for k in before:
        np.testing.assert_array_equal(after[k], before[k], err_msg=k)


def test_full_regime_moves_the_backbone(tiny_data, tmp_path):
    config = quick(regime="full")
    train(config, tiny_data, tmp_path)
    after, before = backbone_state(tmp_path), pristine_backbone(config)
    assert any(not np.array_equal(after[k], before[k]) for k in before)


def test_outputs_and_metrics_columns(tiny_data, tmp_path):
    result = train(quick(epochs=2), tiny_data, tmp_path)
    for name in ("config.json", "metrics.csv", "timing.csv", "checkpoint/manifest.json", "checkpoint/weights.bin"):
        assert (tmp_path / name).exists(), name
    with open(tmp_path / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert tuple(rows[0]) == METRIC_COLUMNS
    assert [int(r["epoch"]) for r in rows] == [1, 2]
    assert int(rows[0]["trainable_params"]) == result.trainable_params
    assert json.loads((tmp_path / "config.json").read_text())["experiment"]["regime"] == "adaptsign"
    assert len(result.step_times) == 4


def test_metrics_are_reproducible(tiny_data, tmp_path):
    config = quick(epochs=2, seed=4)
    train(config, tiny_data, tmp_path / "a")
    train(config, tiny_data, tmp_path / "b")
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


def test_unalignable_corpus_is_rejected(tmp_path):
    spec = SyntheticSpec(frames_per_gloss=2, min_len=4, max_len=4, train=4, dev=1, test=1)
    generate_dataset(spec, tmp_path / "data")
    with pytest.raises(DataConfigError, match="frames per gloss"):
        train(quick(), tmp_path / "data", tmp_path / "run")


def test_evaluate_checkpoint_and_vocab_guard(tiny_data, tmp_path):
    train(quick(), tiny_data, tmp_path / "run")
    result = evaluate(tmp_path / "run" / "checkpoint", tiny_data, "dev")
    assert result.breakdown.ref_len == sum(len(s["ref"]) for s in result.samples)
    assert len(result.samples) == 2

    other = tmp_path / "other"
    generate_dataset(SyntheticSpec(vocab=7, train=1, dev=1, test=1), other)
    with pytest.raises(CompatibilityError):
        evaluate(tmp_path / "run" / "checkpoint", other, "dev")


def test_checkpoint_round_trip(tmp_path):
    model = build_model(ExperimentConfig(), vocab=6)
    save_checkpoint(tmp_path / "ck", model, {"note": "x"})
    manifest, tensors = load_tensors(tmp_path / "ck")
    assert manifest["format"] == "adaptsign-checkpoint"
    assert manifest["config"]["note"] == "x"
    offsets = [e["offset"] for e in manifest["tensors"]]
    assert offsets == sorted(offsets)
    assert (tmp_path / "ck" / "weights.bin").stat().st_size == sum(e["nbytes"] for e in manifest["tensors"])
    again, _ = load_checkpoint(tmp_path / "ck")
    for (n, a), (m, b) in zip(model.state_dict().items(), again.state_dict().items()):
        assert n == m
        np.testing.assert_array_equal(a, b)


def test_foreign_directory_is_not_a_checkpoint(tmp_path):
    (tmp_path / "manifest.json").write_text('{"format": "other"}')
    with pytest.raises(CompatibilityError):
        load_tensors(tmp_path)


def test_config_round_trip(tmp_path):
    config = overfit_preset(regime="partial(2)", seed=3)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(config.to_dict()))
    assert ExperimentConfig.load(path) == config
    with pytest.raises(ConfigError):
        ExperimentConfig(regime="partial")


def test_comparison_outputs(tiny_data, tmp_path):
    rows, table = run_comparison(quick(eval_train=False), tiny_data, tmp_path, seeds=(0,), regimes=("frozen", "adaptsign"))
    assert [r["regime"] for r in rows] == ["frozen", "adaptsign"]
    assert rows[0]["trainable_backbone"] == 0 and rows[1]["trainable_backbone"] == 0
    assert (tmp_path / "compare.csv").exists()
    assert (tmp_path / "compare.txt").read_text() == table
    assert "1.00x" in table


def test_medians_per_regime():
    rows = [
        {"regime": r, "seed": s, "dev_wer": w, "test_wer": w, "best_dev_wer": w, "median_step_time": 0.01 * (s + 1), "trainable_params": 5}
        for r, ws in (("frozen", (50.0, 70.0, 60.0)), ("full", (10.0, 30.0, 20.0)))
        for s, w in enumerate(ws)
    ]
    med = comparison_medians(rows)
    assert med["frozen"]["dev_wer"] == 60.0 and med["full"]["dev_wer"] == 20.0
    assert med["full"]["median_step_time"] == pytest.approx(0.02)
    assert comparison_table(rows).count("\n") == 4
