"""Dual-channel time-domain speech separation with speaker/direction set inference."""

from .config import ModelConfig, RunConfig, arch_fingerprint, load_config
from .datasim import (
    MixtureExample,
    RoomSpec,
    azimuth_to_class,
    compute_azimuth,
    generate_rir,
    simulate_mixture,
    synth_speaker_signal,
)
from .inference import InferenceResult, SetInference, SourceMask
from .manifest import ManifestEntry, read_manifest, write_manifest
from .model import SDNet, SeparatedSource, build_model
from .objectives import LossBreakdown, count_accuracy, improvement, sdr, sequence_ce, sisnr, total_loss

__all__ = [
    "InferenceResult",
    "LossBreakdown",
    "ManifestEntry",
    "MixtureExample",
    "ModelConfig",
    "RoomSpec",
    "RunConfig",
    "SDNet",
    "SeparatedSource",
    "SetInference",
    "SourceMask",
    "arch_fingerprint",
    "azimuth_to_class",
    "build_model",
    "compute_azimuth",
    "count_accuracy",
    "generate_rir",
    "improvement",
    "load_config",
    "read_manifest",
    "sdr",
    "sequence_ce",
    "simulate_mixture",
    "sisnr",
    "synth_speaker_signal",
    "total_loss",
    "write_manifest",
]
