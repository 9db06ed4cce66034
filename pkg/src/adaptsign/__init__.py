"""Parameter-efficient adaptation of a frozen ViT for continuous sign recognition, in numpy."""

import os as _os

# Single-threaded BLAS by default: runs are then bit-reproducible. Set the variables
# yourself before importing to opt out.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_var, "1")

from .adaptation import AdaptationConfig, AdaptationModules
from .backbone import PRESETS, Backbone, Regime, ViTConfig, set_trainability
from .ctc import ctc_brute_force, ctc_forward_loss, greedy_decode
from .errors import AdaptSignError
from .metrics import WerBreakdown, align_and_count, corpus_breakdown, wer
from .model import AdaptSignModel, ModelSpec

__version__ = "0.1.0"

__all__ = [
    "AdaptationConfig",
    "AdaptationModules",
    "AdaptSignError",
    "AdaptSignModel",
    "Backbone",
    "ModelSpec",
    "PRESETS",
    "Regime",
    "ViTConfig",
    "WerBreakdown",
    "align_and_count",
    "corpus_breakdown",
    "ctc_brute_force",
    "ctc_forward_loss",
    "greedy_decode",
    "set_trainability",
    "wer",
]
