#!/usr/bin/env python3
# A pre-norm ViT, then the four adaptation pieces hung on it.

# %%
import numpy as np

from adaptsign import numerics as nx
from adaptsign.adaptation import AdaptationConfig
from adaptsign.backbone import Regime, ViTConfig
from adaptsign.model import AdaptSignModel, ModelSpec

vit = ViTConfig.preset("desk")
vit  # 32x32 frames, 8x8 patches -> 16 patches + class token

frames = np.random.default_rng(0).random((8, 3, 32, 32)).astype(np.float32)

# %% frozen backbone: the class token of each frame is its feature
frozen = AdaptSignModel(ModelSpec(vit, 6, None))
with nx.no_grad():
    base, _ = frozen.frame_features(frames)
base.shape

# %% adapters and the multiscale head start at zero; a gate pinned at 0.5 makes fusion an identity
adapted = AdaptSignModel(ModelSpec(vit, 6, AdaptationConfig(prefix_length=0)))
adapted.adaptation.cross_frame.force_gate(0.5)
with nx.no_grad():
    feats, _ = adapted.frame_features(frames)
np.array_equal(feats.data, base.data)  # bit for bit

# %% with prefixes switched on, keys grow by the prefix length in every layer
model = AdaptSignModel(ModelSpec(vit, 6, AdaptationConfig()))
with nx.no_grad():
    _, out = model.frame_features(frames, record_attention=True)
out.attention[-1].shape  # [T, heads, 17, 17 + 8]

# %% which parameters a regime trains
for name in ("frozen", "partial(2)", "full", "adaptsign"):
    print(name, Regime.parse(name))

# %% the sequence head shortens time by 4 before the BiLSTM
logp = model(frames)
logp.shape, np.exp(logp.data).sum(axis=1)[:3]
