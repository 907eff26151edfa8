"""Dataset simulation driver: build train/dev/test splits on disk.

The train and dev splits share a speaker pool (dev holds out mixtures, not
speakers); the test split uses a disjoint speaker set. Everything derives
from the data seed, so rerunning produces identical manifests and audio.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .config import RunConfig, validate_config
from .datasim import MIC_SPACING, RoomSpec, simulate_mixture
from .manifest import save_example, write_manifest

log = logging.getLogger(__name__)


def _speaker_pools(cfg: RunConfig) -> tuple[list[int], list[int]]:
    d = cfg.data
    train = d.train_speaker_ids if d.train_speaker_ids is not None else list(range(d.train_speakers))
    test = (
        d.test_speaker_ids
        if d.test_speaker_ids is not None
        else list(range(d.train_speakers, d.train_speakers + d.test_speakers))
    )
    return list(train), list(test)


def _sample_room(cfg: RunConfig, rng: np.random.Generator) -> RoomSpec:
    d = cfg.data
    dims = rng.uniform(np.asarray(d.room_min), np.asarray(d.room_max))
    rt60 = float(rng.uniform(0.04, 0.2)) if d.reverberant else 0.0
    center = dims / 2.0
    half = MIC_SPACING / 2.0
    mics = (
        (center[0] - half, center[1], center[2]),
        (center[0] + half, center[1], center[2]),
    )
    return RoomSpec(
        dims=tuple(float(v) for v in dims),
        rt60=rt60,
        mic_positions=mics,
        sample_rate=cfg.model.sample_rate,
    )


def _build_split(
    cfg: RunConfig,
    split: str,
    n_examples: int,
    speaker_pool: list[int],
    seed_base: int,
    out_dir: Path,
) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    audio_dir = out_dir / "audio"
    entries = []
    sizes = sorted(cfg.data.mix_sizes)
    for i in range(n_examples):
        seed = seed_base + i
        rng = np.random.default_rng([seed, 0xD0C5])
        n_src = sizes[i % len(sizes)]
        speakers = [int(s) for s in rng.choice(speaker_pool, size=n_src, replace=False)]
        room = _sample_room(cfg, rng)
        example = simulate_mixture(
            speakers,
            room,
            seed=seed,
            duration_s=cfg.data.duration_s,
            n_speakers=cfg.model.n_speakers,
        )
        entries.append(save_example(example, audio_dir, stem=f"{split}_{i:05d}"))
    manifest_path = out_dir / "manifest.jsonl"
    write_manifest(manifest_path, entries)
    log.info("%s: %d examples -> %s", split, n_examples, manifest_path)
    return manifest_path


def cmd_simulate(cfg: RunConfig) -> dict[str, Path]:
    """Write train/dev/test manifests plus audio under the dataset directory."""
    validate_config(cfg)
    train_pool, test_pool = _speaker_pools(cfg)
    base = cfg.dataset_dir()
    seed0 = cfg.data.seed
    paths = {
        "train": _build_split(cfg, "train", cfg.data.n_train, train_pool, seed0, base / "train"),
        "dev": _build_split(cfg, "dev", cfg.data.n_dev, train_pool, seed0 + 100_000, base / "dev"),
        "test": _build_split(cfg, "test", cfg.data.n_test, test_pool, seed0 + 200_000, base / "test"),
    }
    return paths
