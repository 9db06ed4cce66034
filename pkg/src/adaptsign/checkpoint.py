"""
Checkpoint directories: ``manifest.json`` plus ``weights.bin``.

The manifest echoes the run configuration and indexes every tensor by name,
shape, dtype and byte offset; ``weights.bin`` is the raw little-endian float32
data of all tensors concatenated in index order.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import CompatibilityError
from .model import AdaptSignModel, ModelSpec
from .numerics import Module

FORMAT = "adaptsign-checkpoint"
VERSION = 1
_LE_F32 = np.dtype("<f4")


def save_tensors(directory: str | Path, tensors: dict[str, np.ndarray], config: dict) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index, offset = [], 0
    with open(directory / "weights.bin", "wb") as fh:
        for name, value in tensors.items():
            raw = np.ascontiguousarray(value, dtype=_LE_F32).tobytes()
            index.append({"name": name, "shape": list(value.shape), "dtype": "float32", "offset": offset, "nbytes": len(raw)})
            fh.write(raw)
            offset += len(raw)
    manifest = {"format": FORMAT, "version": VERSION, "config": config, "tensors": index}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return directory


def load_tensors(directory: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    if manifest.get("format") != FORMAT:
        raise CompatibilityError(f"{directory} is not a {FORMAT} directory")
    blob = (directory / "weights.bin").read_bytes()
    tensors = {}
    for entry in manifest["tensors"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        arr = np.frombuffer(blob, dtype=_LE_F32, count=count, offset=entry["offset"])
        tensors[entry["name"]] = arr.reshape(entry["shape"]).astype(np.float32)
    return manifest, tensors


def save_checkpoint(directory: str | Path, model: Module, config: dict | None = None) -> Path:
    config = dict(config or {})
    if isinstance(model, AdaptSignModel):
        config.setdefault("model", model.spec.to_dict())
    return save_tensors(directory, model.state_dict(), config)


def load_checkpoint(directory: str | Path, dtype=np.float32) -> tuple[AdaptSignModel, dict]:
    """Rebuild the model described by the manifest and load its weights."""
    manifest, tensors = load_tensors(directory)
    try:
        spec = ModelSpec.from_dict(manifest["config"]["model"])
    except KeyError:
        raise CompatibilityError(f"{directory} carries no model description") from None
    model = AdaptSignModel(spec, dtype=dtype)
    model.load_state_dict(tensors)
    return model, manifest
