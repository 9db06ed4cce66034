import numpy as np
import pytest

from adaptsign import numerics as nx
from adaptsign.adaptation import AdaptationConfig, AdaptationModules
from adaptsign.backbone import Backbone, BlockHooks, Regime, ViTConfig, attend, set_trainability, vit_block_forward
from adaptsign.errors import ConfigError, DimensionError, EmptyInputError
from adaptsign.model import AdaptSignModel, ModelSpec
from adaptsign.numerics import Tensor

DESK = ViTConfig.preset("desk")


def test_desk_patch_embedding_shape(rng):
    tokens = Backbone(DESK).patch_embed(rng.random((3, 32, 32)))
    assert tokens.shape == (17, 64)


def test_b16_token_count():
    vit = ViTConfig.preset("B16-full")
    assert (vit.tokens, vit.dim) == (197, 768)


def test_zero_image_rows_equal_projection_bias(rng):
    bb = Backbone(DESK)
    bb.pos_embed.data[:] = 0.0
    bb.patch_b.data[:] = rng.standard_normal(64)
    tokens = bb.patch_embed(np.zeros((3, 32, 32))).data
    np.testing.assert_array_equal(tokens[1:], np.broadcast_to(bb.patch_b.data, (16, 64)))


def test_wrong_frame_size_is_a_dimension_error():
    with pytest.raises(DimensionError):
        Backbone(DESK).patch_embed(np.zeros((3, 24, 24)))


def test_config_validation():
    with pytest.raises(ConfigError):
        ViTConfig(layers=2, dim=10, heads=3, patch=8, image=32)
    with pytest.raises(ConfigError):
        ViTConfig(layers=2, dim=16, heads=2, patch=8, image=30)
    with pytest.raises(ConfigError):
        ViTConfig.preset("L14")


def test_forward_shapes(rng):
    out = Backbone(DESK).forward(rng.random((4, 3, 32, 32)))
    assert len(out.layers) == 4
    assert all(z.shape == (4, 17, 64) for z in out.layers)
    assert out.cls.shape == (4, 64)
    assert out.patches.shape == (4, 16, 64)


def test_empty_clip_rejected():
    with pytest.raises(EmptyInputError):
        Backbone(DESK).forward(np.zeros((0, 3, 32, 32)))


def loop_attention(q, k, v):
    out = np.zeros_like(q)
    for i in range(q.shape[0]):
        s = np.array([q[i] @ k[j] for j in range(k.shape[0])]) / np.sqrt(q.shape[1])
        w = np.exp(s - s.max())
        w /= w.sum()
        out[i] = sum(w[j] * v[j] for j in range(k.shape[0]))
    return out


def test_attend_matches_loop_oracle(rng):
    q, k, v = (rng.standard_normal((5, 4)) for _ in range(3))
    np.testing.assert_allclose(attend(Tensor(q), Tensor(k), Tensor(v)).data, loop_attention(q, k, v), rtol=1e-12)


def test_block_with_zero_init_hooks_matches_plain_block(rng):
    bb = Backbone(DESK, dtype=np.float64)
    ad = AdaptationModules(4, 64, 4, AdaptationConfig(prefix_length=0), dtype=np.float64)
    z = Tensor(rng.standard_normal((2, 17, 64)))
    plain = vit_block_forward(z, bb.blocks[0], 4).data
    hooked = vit_block_forward(z, bb.blocks[0], 4, ad.hooks()[0]).data
    assert hooked.shape == z.shape
    np.testing.assert_array_equal(hooked, plain)


def test_hook_width_mismatch_is_a_config_error(rng):
    bb = Backbone(DESK)
    z = Tensor(rng.standard_normal((1, 17, 64)).astype(np.float32))
    with pytest.raises(ConfigError):
        vit_block_forward(z, bb.blocks[0], 4, BlockHooks(prefix=nx.zeros((2, 32))))
    with pytest.raises(ConfigError):
        bb.forward(np.zeros((1, 3, 32, 32)), hooks=[BlockHooks()])


@pytest.mark.parametrize(
    "text, parsed",
    [("frozen", Regime("frozen")), ("full", Regime("full")), ("partial(2)", Regime("partial", 2)), ("adaptsign", Regime("adaptsign"))],
)
def test_regime_parsing(text, parsed):
    assert Regime.parse(text) == parsed
    assert str(parsed) == text


@pytest.mark.parametrize("bad", ["partial", "frozen(1)", "lora"])
def test_bad_regimes(bad):
    with pytest.raises(ConfigError):
        Regime.parse(bad)


def _model(adaptation=True):
    return AdaptSignModel(ModelSpec(DESK, 6, AdaptationConfig() if adaptation else None))


def _trainable_backbone(model):
    return {n for n, p in model.named_parameters() if p.requires_grad and n.startswith("backbone/")}


def test_regime_trainability():
    model = _model()
    set_trainability(model, "frozen")
    assert not _trainable_backbone(model)

    set_trainability(model, "full")
    assert _trainable_backbone(model) == {n for n, _ in model.named_parameters() if n.startswith("backbone/")}

    set_trainability(model, "partial(1)")
    names = _trainable_backbone(model)
    assert names and all(n.startswith("backbone/blocks.3.") for n in names)
    assert len(names) == len(list(model.backbone.blocks[3].named_parameters()))

    mask = set_trainability(model, "adaptsign")
    assert not _trainable_backbone(model)
    assert all(mask[n] for n in mask if not n.startswith("backbone/"))


def test_partial_beyond_depth_rejected():
    with pytest.raises(ConfigError):
        set_trainability(_model(), "partial(5)")
