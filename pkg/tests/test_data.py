import json

import numpy as np
import pytest

from adaptsign.data import (
    SPLITS,
    AugmentConfig,
    SyntheticSpec,
    VideoSample,
    augment,
    generate_dataset,
    gloss_inventory,
    load_split,
    read_index,
    temporal_resample,
)
from adaptsign.errors import ConfigError


def test_generation_is_byte_identical(tmp_path):
    spec = SyntheticSpec(train=3, dev=1, test=1, seed=5)
    generate_dataset(spec, tmp_path / "a")
    generate_dataset(spec, tmp_path / "b")
    for split in SPLITS:
        for f in sorted((tmp_path / "a" / split).iterdir()):
            assert f.read_bytes() == (tmp_path / "b" / split / f.name).read_bytes()


def test_index_and_blobs(tiny_data):
    index = read_index(tiny_data, "train")
    assert index["image"] == 40
    assert len(index["samples"]) == 4
    entry = index["samples"][0]
    assert set(entry) == {"id", "T", "transcript", "file"}
    blob = (tiny_data / "train" / entry["file"]).stat().st_size
    assert blob == entry["T"] * 3 * 40 * 40 * 4


def test_loaded_samples(tiny_data):
    spec, samples = load_split(tiny_data, "train")
    assert spec == SyntheticSpec(**json.loads((tiny_data / "train" / "index.json").read_text())["spec"])
    for s in samples:
        assert s.frames.dtype == np.float32
        assert s.frames.shape[1:] == (3, 40, 40)
        assert s.num_frames == spec.frames_for(len(s.transcript))
        assert spec.min_len <= len(s.transcript) <= spec.max_len
        assert all(1 <= g <= spec.vocab for g in s.transcript)
        assert all(a != b for a, b in zip(s.transcript, s.transcript[1:]))
        assert 0.0 <= s.frames.min() and s.frames.max() <= 1.0


def test_glosses_are_distinct():
    inv = gloss_inventory(SyntheticSpec(vocab=12))
    masks = {g.mask.tobytes() for g in inv.values()}
    assert len(masks) == 12
    colours = np.stack([g.colour for g in inv.values()])
    assert len(np.unique(colours.round(4), axis=0)) == 12


@pytest.mark.parametrize("bad", [dict(vocab=1), dict(frames_per_gloss=1), dict(min_len=3, max_len=2), dict(image=12), dict(noise=-0.1), dict(dev=-1)])
def test_spec_validation(bad):
    with pytest.raises(ConfigError):
        SyntheticSpec(**bad)


def test_temporal_resample():
    frames = np.arange(10)[:, None]
    assert temporal_resample(frames, 1.0).ravel().tolist() == list(range(10))
    assert temporal_resample(frames, 0.5).ravel().tolist() == [0, 2, 4, 6, 8]
    assert len(temporal_resample(frames, 1.2)) == 12
    assert len(temporal_resample(frames[:3], 0.5, min_frames=4)) == 4


def test_augment_modes(rng):
    video = VideoSample(rng.random((10, 3, 40, 40)).astype(np.float32), [1, 2], "x")
    ev = augment(video, training=False, rng=None)
    np.testing.assert_array_equal(ev.frames, video.frames[:, :, 4:36, 4:36])
    tr = augment(video, training=True, rng=rng, config=AugmentConfig(flip=True))
    assert tr.frames.shape[1:] == (3, 32, 32)
    assert 8 <= tr.num_frames <= 12
    assert tr.transcript == [1, 2]


def test_crop_larger_than_frame():
    with pytest.raises(ConfigError):
        augment(VideoSample(np.zeros((4, 3, 20, 20), np.float32), [1]), training=False, rng=None)
