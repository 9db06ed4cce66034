#!/usr/bin/env python3
# Synthetic sign videos, an overfit run on the desk model, evaluation and attention maps.
# The overfit run takes a few minutes on one core.

# %%
import tempfile
from pathlib import Path

import numpy as np

from adaptsign.attention_maps import dump_attention
from adaptsign.checkpoint import load_checkpoint
from adaptsign.data import SyntheticSpec, augment, generate_dataset, load_split
from adaptsign.training import evaluate, overfit_preset, train

root = Path(tempfile.mkdtemp(prefix="adaptsign-"))

# %% each gloss is a coloured shape on a path; sentences are runs of glosses with noise
spec = SyntheticSpec(train=16, dev=4, test=4, seed=0)
generate_dataset(spec, root / "data")
_, samples = load_split(root / "data", "train")
samples[0].transcript, samples[0].frames.shape

# %% evaluation crops the centre; training crops at random and resamples time
augment(samples[0], training=False, rng=None).frames.shape

# %% overfit: adaptsign regime, constant rate, stops once train WER drops under 5%
result = train(overfit_preset(), root / "data", root / "overfit", log=print)
[r["train_wer"] for r in result.rows][-3:]

# %% dev-set WER of the saved checkpoint
ev = evaluate(root / "overfit" / "checkpoint", root / "data", "dev")
ev.wer, ev.samples[0]

# %% last-layer class-token attention and cross-frame gates, as PGM images
model, _ = load_checkpoint(root / "overfit" / "checkpoint")
frames = augment(samples[0], training=False, rng=None).frames
dump = dump_attention(model, frames, root / "attn", scale=8)
dump.spatial.shape, np.round(dump.spatial[0, :8], 3)
