"""
Synthetic sign-video corpus, its on-disk format, and training-time augmentation.

Each gloss id owns a coloured glyph and a motion path; a sentence is the
concatenation of its glosses' clips joined by short cross-fades. A split is
stored as ``<root>/<split>/index.json`` plus one raw little-endian float32
blob ``[T, 3, S, S]`` per sample.
"""

from __future__ import annotations

import colorsys
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError

SPLITS = ("train", "dev", "test")
TRANSITION_FRAMES = 2
GLYPH = 10
_LE_F32 = np.dtype("<f4")


@dataclass(frozen=True)
class SyntheticSpec:
    vocab: int = 6
    min_len: int = 2
    max_len: int = 4
    frames_per_gloss: int = 6
    image: int = 40
    noise: float = 0.05
    train: int = 40
    dev: int = 12
    test: int = 12
    seed: int = 0

    def __post_init__(self):
        if self.vocab < 2:
            raise ConfigError(f"vocab must be >= 2, got {self.vocab}")
        if self.frames_per_gloss < 2:
            raise ConfigError(f"frames per gloss must be >= 2, got {self.frames_per_gloss}")
        if not 1 <= self.min_len <= self.max_len:
            raise ConfigError(f"sentence length range [{self.min_len}, {self.max_len}] is invalid")
        if self.image < 2 * GLYPH:
            raise ConfigError(f"image side must be >= {2 * GLYPH}, got {self.image}")
        if self.noise < 0:
            raise ConfigError(f"pixel noise must be >= 0, got {self.noise}")
        if min(self.train, self.dev, self.test) < 0:
            raise ConfigError("split sizes must be nonnegative")

    def frames_for(self, length: int) -> int:
        return self.frames_per_gloss * length + TRANSITION_FRAMES * (length - 1)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class VideoSample:
    frames: np.ndarray
    transcript: list[int]
    sample_id: str = ""

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


@dataclass
class Gloss:
    mask: np.ndarray
    colour: np.ndarray
    path: np.ndarray = field(repr=False)


def gloss_inventory(spec: SyntheticSpec) -> dict[int, Gloss]:
    """Deterministic glyph, colour and trajectory for each gloss id 1..V."""
    rng = np.random.default_rng([spec.seed, 7919])
    inventory, seen = {}, set()
    room = spec.image - GLYPH
    for gid in range(1, spec.vocab + 1):
        while True:
            mask = rng.random((GLYPH, GLYPH)) < 0.5
            key = mask.tobytes()
            if key not in seen and mask.sum() > GLYPH:
                seen.add(key)
                break
        hue = (gid - 1) / spec.vocab
        colour = np.array(colorsys.hsv_to_rgb(hue, 0.9, 1.0), dtype=np.float32)
        start, end = rng.uniform(0, room, size=2), rng.uniform(0, room, size=2)
        bend = rng.uniform(-0.25, 0.25) * room
        u = np.linspace(0.0, 1.0, spec.frames_per_gloss)
        normal = np.array([end[1] - start[1], start[0] - end[0]])
        normal = normal / (np.linalg.norm(normal) + 1e-9)
        path = start[None] + u[:, None] * (end - start)[None] + (4 * u * (1 - u))[:, None] * bend * normal[None]
        inventory[gid] = Gloss(mask, colour, np.clip(path, 0, room))
    return inventory


def render_frame(gloss: Gloss, position, image: int) -> np.ndarray:
    frame = np.full((3, image, image), 0.1, dtype=np.float32)
    y, x = (int(round(v)) for v in position)
    patch = gloss.mask[None].astype(np.float32) * gloss.colour[:, None, None]
    region = frame[:, y : y + GLYPH, x : x + GLYPH]
    frame[:, y : y + GLYPH, x : x + GLYPH] = np.where(gloss.mask[None], patch, region)
    return frame


def render_sentence(transcript: list[int], inventory: dict[int, Gloss], spec: SyntheticSpec, rng) -> np.ndarray:
    clips = [np.stack([render_frame(inventory[g], pos, spec.image) for pos in inventory[g].path]) for g in transcript]
    frames = [clips[0]]
    for prev, nxt in zip(clips, clips[1:]):
        a, b = prev[-1], nxt[0]
        blend = [(1 - w) * a + w * b for w in np.arange(1, TRANSITION_FRAMES + 1) / (TRANSITION_FRAMES + 1)]
        frames += [np.stack(blend), nxt]
    video = np.concatenate(frames)
    if spec.noise > 0:
        video = video + spec.noise * rng.standard_normal(video.shape)
    return np.clip(video, 0.0, 1.0).astype(np.float32)


def sample_transcript(spec: SyntheticSpec, rng) -> list[int]:
    """Uniform length, uniform glosses, no gloss repeated back to back."""
    length = int(rng.integers(spec.min_len, spec.max_len + 1))
    out: list[int] = []
    for _ in range(length):
        choices = [g for g in range(1, spec.vocab + 1) if not out or g != out[-1]]
        out.append(int(rng.choice(choices)))
    return out


def generate_dataset(spec: SyntheticSpec, root: str | Path) -> dict[str, Path]:
    """Write train/dev/test splits under ``root``; same spec gives byte-identical files."""
    root = Path(root)
    inventory = gloss_inventory(spec)
    paths = {}
    for k, split in enumerate(SPLITS):
        rng = np.random.default_rng([spec.seed, k])
        split_dir = root / split
        split_dir.mkdir(parents=True, exist_ok=True)
        entries = []
        for i in range(getattr(spec, split)):
            transcript = sample_transcript(spec, rng)
            video = render_sentence(transcript, inventory, spec, rng)
            sid = f"{split}-{i:04d}"
            (split_dir / f"{sid}.f32").write_bytes(video.astype(_LE_F32).tobytes())
            entries.append({"id": sid, "T": int(video.shape[0]), "transcript": transcript, "file": f"{sid}.f32"})
        index = {"spec": spec.to_dict(), "image": spec.image, "samples": entries}
        (split_dir / "index.json").write_text(json.dumps(index, indent=1, sort_keys=True) + "\n")
        paths[split] = split_dir / "index.json"
    return paths


def read_index(root: str | Path, split: str) -> dict:
    return json.loads((Path(root) / split / "index.json").read_text())


def load_split(root: str | Path, split: str) -> tuple[SyntheticSpec, list[VideoSample]]:
    index = read_index(root, split)
    spec = SyntheticSpec(**index["spec"])
    side = int(index["image"])
    samples = []
    for entry in index["samples"]:
        raw = np.fromfile(Path(root) / split / entry["file"], dtype=_LE_F32)
        frames = raw.reshape(int(entry["T"]), 3, side, side).astype(np.float32)
        samples.append(VideoSample(frames, list(entry["transcript"]), entry["id"]))
    return spec, samples


@dataclass(frozen=True)
class AugmentConfig:
    crop: int = 32
    flip: bool = False
    temporal_scale: tuple[float, float] = (0.8, 1.2)
    min_frames: int = 4

    def to_dict(self) -> dict:
        return asdict(self)


def temporal_resample(frames: np.ndarray, factor: float, min_frames: int = 1) -> np.ndarray:
    """Nearest-frame resampling to round(T * factor) frames."""
    t = frames.shape[0]
    new_t = max(min_frames, int(round(t * factor)))
    idx = np.minimum((np.arange(new_t) * t / new_t).astype(int), t - 1)
    return frames[idx]


def augment(sample: VideoSample, training: bool, rng: np.random.Generator | None, config: AugmentConfig = AugmentConfig()) -> VideoSample:
    """Random crop, optional flip and temporal rescaling when training; centre crop otherwise."""
    frames = sample.frames
    side = frames.shape[-1]
    if config.crop > side:
        raise ConfigError(f"crop {config.crop} is larger than the {side}px frames")
    room = side - config.crop
    if training:
        y, x = (int(v) for v in rng.integers(0, room + 1, size=2))
        frames = frames[:, :, y : y + config.crop, x : x + config.crop]
        if config.flip and rng.random() < 0.5:
            frames = frames[..., ::-1]
        lo, hi = config.temporal_scale
        frames = temporal_resample(frames, float(rng.uniform(lo, hi)), config.min_frames)
    else:
        y = x = room // 2
        frames = frames[:, :, y : y + config.crop, x : x + config.crop]
    return VideoSample(np.ascontiguousarray(frames), list(sample.transcript), sample.sample_id)
