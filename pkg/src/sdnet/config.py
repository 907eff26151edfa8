"""Run configuration: TOML loading, defaults, architecture fingerprint.

Default model hyperparameters are the reference operating point: (1, 256,
40, 20) encoders, 3x256-per-direction context BLSTM, two 3x512 decoders,
256-dim embeddings, 4 TCN blocks of 8 dilated layers, (256, 1, 40, 20)
transposed-conv decoder, lambda = 5, 8 kHz audio. arch_fingerprint() hashes
exactly that set so accidental drift trips a frozen golden test.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib


@dataclass
class ModelConfig:
    encoder_channels: int = 256
    encoder_kernel: int = 40
    encoder_stride: int = 20
    encoder_activation: str = "linear"
    iac_enabled: bool = True
    iac_scaled: bool = False
    blstm_hidden: int = 256
    blstm_layers: int = 3
    decoder_hidden: int = 512
    decoder_layers: int = 3
    attention_dim: int = 256
    output_proj_dim: int = 256
    output_activation: str = "tanh"
    embedding_dim: int = 256
    n_speakers: int = 30
    n_directions: int = 37
    tcn_blocks: int = 4
    tcn_layers_per_block: int = 8
    tcn_hidden: int = 512
    bottleneck_channels: int = 256
    tcn_kernel: int = 3
    max_decode_steps: int = 5
    sample_rate: int = 8000


@dataclass
class LossConfig:
    lam: float = 5.0
    sisnr_clamp_db: float = 30.0


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 4
    steps: int = 10000
    segment_s: float = 4.0
    grad_clip: float = 5.0
    seed: int = 0
    checkpoint_every: int = 500
    log_every: int = 50
    plateau_window: int = 200
    plateau_patience: int = 3
    plateau_min_delta: float = 1e-3
    lr_floor: float = 1e-5


@dataclass
class EvalConfig:
    beam_width: int = 3
    sdr_filter_len: int = 512


@dataclass
class DataConfig:
    root: str = "data"
    name: str = "default"
    seed: int = 0
    duration_s: float = 1.0
    n_train: int = 50
    n_dev: int = 20
    n_test: int = 20
    mix_sizes: list[int] = field(default_factory=lambda: [2])
    train_speakers: int = 24
    test_speakers: int = 6
    train_speaker_ids: list[int] | None = None
    test_speaker_ids: list[int] | None = None
    reverberant: bool = False
    room_min: list[float] = field(default_factory=lambda: [4.0, 3.0, 2.5])
    room_max: list[float] = field(default_factory=lambda: [7.0, 6.0, 3.5])


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    data: DataConfig = field(default_factory=DataConfig)
    run_dir: str = "runs/default"

    def data_root(self) -> Path:
        """Dataset root; the SDNET_DATA_DIR environment variable overrides."""
        env = os.environ.get("SDNET_DATA_DIR")
        return Path(env) if env else Path(self.data.root)

    def dataset_dir(self) -> Path:
        return self.data_root() / self.data.name

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTION_TYPES = {
    "model": ModelConfig,
    "loss": LossConfig,
    "train": TrainConfig,
    "eval": EvalConfig,
    "data": DataConfig,
}
_KEY_ALIASES = {("loss", "lambda"): "lam"}


class ConfigError(ValueError):
    pass


def _build_section(section: str, cls, raw: dict):
    known = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        name = _KEY_ALIASES.get((section, key), key)
        if name not in known:
            raise ConfigError(f"unknown key '{key}' in [{section}]")
        kwargs[name] = value
    return cls(**kwargs)


def load_config(path: str | os.PathLike) -> RunConfig:
    with open(path, "rb") as f:
        raw = tomllib.load(f)
    sections = {}
    for name, value in raw.items():
        if name == "run_dir":
            continue
        if name not in _SECTION_TYPES:
            raise ConfigError(f"unknown section [{name}]")
        sections[name] = _build_section(name, _SECTION_TYPES[name], value)
    cfg = RunConfig(**sections)
    if "run_dir" in raw:
        cfg.run_dir = raw["run_dir"]
    validate_config(cfg)
    return cfg


def config_from_dict(d: dict) -> RunConfig:
    sections = {
        name: _SECTION_TYPES[name](**{k: v for k, v in d[name].items()})
        for name in _SECTION_TYPES
        if name in d
    }
    cfg = RunConfig(**sections)
    cfg.run_dir = d.get("run_dir", cfg.run_dir)
    return cfg


def validate_config(cfg: RunConfig) -> None:
    d = cfg.data
    train_ids = set(d.train_speaker_ids) if d.train_speaker_ids is not None else set(range(d.train_speakers))
    test_ids = (
        set(d.test_speaker_ids)
        if d.test_speaker_ids is not None
        else set(range(d.train_speakers, d.train_speakers + d.test_speakers))
    )
    overlap = train_ids & test_ids
    if overlap:
        raise ConfigError(f"train/test speaker sets overlap: {sorted(overlap)}")
    all_ids = train_ids | test_ids
    if all_ids and max(all_ids) >= cfg.model.n_speakers:
        raise ConfigError(
            f"speaker id {max(all_ids)} outside the model vocabulary of {cfg.model.n_speakers}"
        )
    for size in d.mix_sizes:
        if size not in (2, 3):
            raise ConfigError(f"mix size must be 2 or 3, got {size}")
    largest = max(d.mix_sizes) if d.mix_sizes else 0
    if largest > min(len(train_ids), len(test_ids)):
        raise ConfigError(
            f"{largest}-source mixtures need at least {largest} speakers in every split pool"
        )


def arch_fingerprint(cfg: RunConfig) -> str:
    """sha256 over the reference architecture hyperparameters."""
    m = cfg.model
    spec = {
        "encoder": [1, m.encoder_channels, m.encoder_kernel, m.encoder_stride],
        "blstm": [m.blstm_layers, m.blstm_hidden],
        "decoders": [m.decoder_layers, m.decoder_hidden],
        "embedding_dim": m.embedding_dim,
        "tcn": [m.tcn_blocks, m.tcn_layers_per_block],
        "transposed": [m.bottleneck_channels, 1, m.encoder_kernel, m.encoder_stride],
        "lambda": cfg.loss.lam,
        "sample_rate": m.sample_rate,
    }
    blob = json.dumps(spec, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()
