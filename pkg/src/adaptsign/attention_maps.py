"""Export of spatial and cross-frame attention maps as PGM heatmaps plus raw CSV values."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import AdaptSignModel
from .numerics import no_grad


def write_pgm(path: str | Path, values: np.ndarray, scale: int = 1) -> None:
    """Binary greyscale PGM; values are min-max normalised, NaN renders black."""
    v = np.asarray(values, dtype=np.float64)
    finite = np.isfinite(v)
    lo, hi = (v[finite].min(), v[finite].max()) if finite.any() else (0.0, 0.0)
    span = hi - lo
    norm = np.where(finite, (v - lo) / span if span > 0 else 0.5, 0.0)
    img = np.round(norm * 255).astype(np.uint8)
    if scale > 1:
        img = np.kron(img, np.ones((scale, scale), dtype=np.uint8))
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError(f"{path} is not a binary PGM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4], dtype=np.uint8, count=w * h).reshape(h, w)


@dataclass
class AttentionDump:
    spatial: np.ndarray
    cross_frame: np.ndarray | None
    files: list[Path]


def class_token_attention(model: AdaptSignModel, frames: np.ndarray) -> tuple[np.ndarray, np.ndarray | None, int]:
    """Last-layer class-token attention rows [T, keys] (head mean), cross-frame gates [T, W, n] or None, prefix length."""
    maps: list = []
    with no_grad():
        _, out = model.frame_features(frames, maps if model.adaptation is not None else None, record_attention=True)
    last = out.attention[-1]
    spatial = last[:, :, 0, :].astype(np.float64).mean(axis=1)
    prefix = spatial.shape[1] - out.tokens.shape[1]
    return spatial, (maps[0] if maps else None), prefix


def dump_attention(model: AdaptSignModel, frames: np.ndarray, out_dir: str | Path, scale: int = 8) -> AttentionDump:
    """Write spatial_tNNN.pgm and crossframe_tNNN.pgm per frame plus spatial.csv and cross_frame.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    spatial, gates, prefix = class_token_attention(model, frames)
    t = spatial.shape[0]
    patches = spatial[:, prefix + 1 :]
    side = int(round(np.sqrt(patches.shape[1])))
    files = []

    with open(out_dir / "spatial.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "key", "kind", "weight"])
        for f in range(t):
            for k, value in enumerate(spatial[f]):
                kind = "prefix" if k < prefix else ("cls" if k == prefix else "patch")
                w.writerow([f, k, kind, repr(float(value))])
    for f in range(t):
        path = out_dir / f"spatial_t{f:03d}.pgm"
        write_pgm(path, patches[f].reshape(side, side), scale)
        files.append(path)

    if gates is not None:
        cf = model.adaptation.cross_frame
        idx, valid = cf.neighbourhood(t)
        lo = -cf.tau if cf.direction == "bidirectional" else 0
        with open(out_dir / "cross_frame.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["frame", "offset", "neighbour", "patch", "gate"])
            for f in range(t):
                for j in np.flatnonzero(valid[f]):
                    for p, value in enumerate(gates[f, j]):
                        w.writerow([f, lo + j, int(idx[f, j]), p, repr(float(value))])
        for f in range(t):
            path = out_dir / f"crossframe_t{f:03d}.pgm"
            write_pgm(path, gates[f][valid[f]], scale)
            files.append(path)
    return AttentionDump(spatial, gates, files)
