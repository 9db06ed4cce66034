import numpy as np
import pytest

from adaptsign import numerics as nx
from adaptsign.adaptation import (
    AdaptationConfig,
    Adapter,
    CrossFrameAttention,
    MultiscaleAggregator,
    PrefixBank,
    adapter_hidden,
    cross_frame_attention,
    fuse_frame_features,
    prefix_attention,
)
from adaptsign.backbone import ViTConfig, attend
from adaptsign.errors import ConfigError, DimensionError, EmptyInputError
from adaptsign.model import AdaptSignModel, ModelSpec
from adaptsign.numerics import Tensor


def test_adapter_hidden_width_and_param_count(rng):
    assert adapter_hidden(4, 0.5) == 2
    assert adapter_hidden(768, 0.25) == 192
    assert adapter_hidden(10, 0.25) == 3
    a = Adapter(4, 0.5, rng)
    assert sum(p.size for p in a.parameters()) == 22
    assert sum(p.size for p in Adapter(768, 0.25, rng).parameters()) == 295_872


def test_fresh_adapter_outputs_zero(rng):
    a = Adapter(8, 0.25, rng)
    out = a(Tensor(rng.standard_normal((3, 5, 8)).astype(np.float32)))
    assert out.shape == (3, 5, 8)
    assert not np.any(out.data)


@pytest.mark.parametrize("bad", [dict(ratio=0.0), dict(ratio=1.5), dict(prefix_length=-1), dict(tau=-1), dict(direction="left"), dict(prefix_mode="tied")])
def test_config_rejects(bad):
    with pytest.raises(ConfigError):
        AdaptationConfig(**bad)


def test_prefix_halves_with_zero_logits():
    v, p = 3.0, -1.0
    y = prefix_attention(Tensor([[0.0]]), Tensor([[0.0]]), Tensor([[v]]), Tensor([[p]]))
    assert y.data[0, 0] == pytest.approx((p + v) / 2)


def test_empty_prefix_reduces_to_plain_attention(rng):
    q, k, v = (Tensor(rng.standard_normal((4, 3))) for _ in range(3))
    np.testing.assert_array_equal(prefix_attention(q, k, v, Tensor(np.zeros((0, 3)))).data, attend(q, k, v).data)
    np.testing.assert_array_equal(prefix_attention(q, k, v, None).data, attend(q, k, v).data)


def test_prefix_width_mismatch(rng):
    q = Tensor(rng.standard_normal((2, 3)))
    with pytest.raises(DimensionError):
        prefix_attention(q, q, q, Tensor(np.ones((1, 4))))


def test_prefix_modes(rng):
    independent = PrefixBank(3, 8, 2, "independent", rng)
    shared = PrefixBank(3, 8, 2, "shared", rng)
    assert len(independent.embeddings) == 3 and len(shared.embeddings) == 1
    assert shared.for_layer(0) is shared.for_layer(2)
    assert independent.for_layer(0) is not independent.for_layer(2)
    assert PrefixBank(3, 8, 0, "independent", rng).for_layer(1) is None


def test_multiscale_without_layers_returns_initial_token(rng):
    agg = MultiscaleAggregator(0, 8, 2, False, rng)
    out = agg.aggregate([], frames=3)
    np.testing.assert_array_equal(out.data, np.broadcast_to(agg.token.data, (3, 8)))


def test_multiscale_output_starts_at_zero(rng):
    agg = MultiscaleAggregator(2, 8, 2, False, rng)
    layers = [Tensor(rng.standard_normal((3, 5, 8)).astype(np.float32)) for _ in range(2)]
    assert not np.any(agg(layers, 3).data)


def loop_cross_frame(x, patches, tau, bidirectional=True, eps=1e-5):
    def ln(v):
        return (v - v.mean()) / np.sqrt(v.var() + eps)

    t, n, d = patches.shape
    out = x.copy()
    for i in range(t):
        lo = i - tau if bidirectional else i
        acc, count = np.zeros(d), 0
        for j in range(lo, i + tau + 1):
            if not 0 <= j < t:
                continue
            for p in range(n):
                a = 1 / (1 + np.exp(-ln(x[i]) @ ln(patches[j, p])))
                acc += (a - 0.5) * patches[j, p]
                count += 1
        out[i] = x[i] + acc / count
    return out


@pytest.mark.parametrize("tau, direction", [(0, "bidirectional"), (1, "bidirectional"), (2, "unidirectional"), (3, "bidirectional")])
def test_cross_frame_matches_loop_oracle(rng, tau, direction):
    x, patches = rng.standard_normal((5, 6)), rng.standard_normal((5, 4, 6))
    cf = CrossFrameAttention(6, tau, direction).astype(np.float64)
    got = cross_frame_attention(Tensor(x), Tensor(patches), cf).data
    np.testing.assert_allclose(got, loop_cross_frame(x, patches, tau, direction == "bidirectional"), rtol=1e-12, atol=1e-13)


def test_single_frame_ignores_tau(rng):
    x, patches = Tensor(rng.standard_normal((1, 6))), Tensor(rng.standard_normal((1, 3, 6)))
    wide = cross_frame_attention(x, patches, CrossFrameAttention(6, 4).astype(np.float64)).data
    narrow = cross_frame_attention(x, patches, CrossFrameAttention(6, 0).astype(np.float64)).data
    assert np.all(np.isfinite(wide))
    np.testing.assert_allclose(wide, narrow, rtol=1e-14)


def test_gate_map_shape_range_and_padding(rng):
    cf = CrossFrameAttention(6, 2)
    maps = []
    cross_frame_attention(Tensor(rng.standard_normal((4, 6))), Tensor(rng.standard_normal((4, 3, 6))), cf, maps)
    a = maps[0]
    assert a.shape == (4, 5, 3)
    _, valid = cf.neighbourhood(4)
    assert np.all(np.isnan(a[~valid]))
    assert np.all((a[valid] > 0) & (a[valid] < 1))


def test_forced_half_gate_is_identity(rng):
    x = Tensor(rng.standard_normal((4, 6)).astype(np.float32))
    patches = Tensor(rng.standard_normal((4, 3, 6)).astype(np.float32))
    cf = CrossFrameAttention(6, 2)
    cf.force_gate(0.5)
    np.testing.assert_array_equal(cross_frame_attention(x, patches, cf).data, x.data)
    cf.force_gate(None)
    assert cf.forced_gate is None
    assert not np.array_equal(cross_frame_attention(x, patches, cf).data, x.data)


def test_cross_frame_errors(rng):
    cf = CrossFrameAttention(6, 1)
    with pytest.raises(EmptyInputError):
        cross_frame_attention(Tensor(np.zeros((0, 6))), Tensor(np.zeros((0, 3, 6))), cf)
    with pytest.raises(DimensionError):
        cross_frame_attention(Tensor(np.zeros((2, 6))), Tensor(np.zeros((3, 3, 6))), cf)
    with pytest.raises(ConfigError):
        CrossFrameAttention(6, -1)


def test_fusion():
    a = Tensor(np.ones((2, 3)))
    np.testing.assert_array_equal(fuse_frame_features(a, nx.zeros((2, 3))).data, a.data)
    with pytest.raises(DimensionError):
        fuse_frame_features(a, nx.zeros((3, 2)))


def test_identity_at_init_is_bit_exact(rng):
    vit = ViTConfig.preset("desk")
    frames = rng.random((6, 3, 32, 32)).astype(np.float32)
    frozen = AdaptSignModel(ModelSpec(vit, 6, None))
    adapted = AdaptSignModel(ModelSpec(vit, 6, AdaptationConfig(prefix_length=0)))
    adapted.adaptation.cross_frame.force_gate(0.5)
    with nx.no_grad():
        base, _ = frozen.frame_features(frames)
        feats, _ = adapted.frame_features(frames)
    assert feats.dtype == np.float32
    np.testing.assert_array_equal(feats.data, base.data)
