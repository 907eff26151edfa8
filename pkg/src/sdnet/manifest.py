"""JSON-lines dataset manifests.

One example per line with audio paths (relative to the manifest directory),
labels, the generation seed and room parameters. read_manifest(write_manifest(x))
round-trips field-by-field.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .audio import read_wav, write_wav
from .datasim import MixtureExample

REQUIRED_FIELDS = (
    "mixture_path",
    "target_paths",
    "speaker_labels",
    "direction_labels",
    "seed",
    "rt60",
    "room_dims",
    "positions",
)


class ManifestError(ValueError):
    pass


@dataclass
class ManifestEntry:
    mixture_path: str
    target_paths: list[str]
    speaker_labels: list[int]
    direction_labels: list[int]
    seed: int
    rt60: float
    room_dims: list[float]
    positions: list[list[float]]

    @property
    def example_id(self) -> str:
        return Path(self.mixture_path).stem


def write_manifest(path: str | os.PathLike, entries: list[ManifestEntry]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for e in entries:
            f.write(json.dumps(asdict(e)) + "\n")


def read_manifest(path: str | os.PathLike) -> list[ManifestEntry]:
    entries = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as err:
                raise ManifestError(f"{path}: line {lineno}: invalid JSON ({err.msg})") from err
            for key in REQUIRED_FIELDS:
                if key not in record:
                    raise ManifestError(f"{path}: line {lineno}: missing field '{key}'")
            entries.append(ManifestEntry(**{k: record[k] for k in REQUIRED_FIELDS}))
    return entries


def save_example(example: MixtureExample, audio_dir: str | os.PathLike, stem: str) -> ManifestEntry:
    """Write mixture/target WAVs for one example and return its manifest entry."""
    audio_dir = Path(audio_dir)
    audio_dir.mkdir(parents=True, exist_ok=True)
    mix_rel = f"audio/{stem}_mix.wav"
    write_wav(audio_dir / f"{stem}_mix.wav", example.mixture, example.sample_rate)
    target_rels = []
    for i, target in enumerate(example.targets):
        rel = f"audio/{stem}_s{i}.wav"
        write_wav(audio_dir / f"{stem}_s{i}.wav", target, example.sample_rate)
        target_rels.append(rel)
    return ManifestEntry(
        mixture_path=mix_rel,
        target_paths=target_rels,
        speaker_labels=list(example.speaker_labels),
        direction_labels=list(example.direction_labels),
        seed=example.seed,
        rt60=example.rt60,
        room_dims=[float(v) for v in example.room_dims],
        positions=[[float(v) for v in p.position] for p in example.placements],
    )


def load_entry_audio(entry: ManifestEntry, base_dir: str | os.PathLike) -> tuple[np.ndarray, np.ndarray]:
    """Load (mixture (2, L), targets (n, L)) for a manifest entry."""
    base = Path(base_dir)
    mixture, _ = read_wav(base / entry.mixture_path)
    targets = np.stack([read_wav(base / rel)[0] for rel in entry.target_paths])
    return mixture, targets
