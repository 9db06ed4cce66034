#!/usr/bin/env python3
# What the adaptation pieces cost next to a ViT-B/16, counted analytically and by instrumentation.

# %%
import numpy as np

from adaptsign.accounting import count_flops, instrumented_costs, overhead_report, scaling_exponents
from adaptsign.adaptation import AdaptationConfig
from adaptsign.backbone import ViTConfig
from adaptsign.model import AdaptSignModel, ModelSpec

b16 = ViTConfig.preset("B16-full")
report = count_flops(b16, AdaptationConfig(ratio=0.25, prefix_length=8, tau=2))

# %% the backbone: about 86M parameters and 17.6 GMACs per 224x224 frame
report.params["backbone"], report.macs["backbone"]

# %% overhead per component, as a percentage of backbone FLOPs
machine, text = overhead_report(report)
print(text)

# %% adapters act on every token: 2 * n * d * (d/4) MACs twice per block, about 1/12 of the block
report.ratio("adapters"), 100 / 12

# %% growth with patch count: adaptation pieces stay roughly linear, attention is quadratic
scaling_exponents(b16, AdaptationConfig())

# %% the formulas agree exactly with what the autodiff counter sees on the desk model
desk = ViTConfig.preset("desk")
model = AdaptSignModel(ModelSpec(desk, 6, AdaptationConfig()))
frames = np.random.default_rng(0).random((16, 3, 32, 32)).astype(np.float32)
measured = instrumented_costs(model, frames)
analytic = count_flops(desk, AdaptationConfig(), frames=16, per_frame=False, vocab=6).costs
all(measured[c] == analytic[c] for c in measured)
