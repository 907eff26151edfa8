"""16-bit PCM WAV I/O helpers.

Waveforms are float64/float32 numpy arrays in [-1, 1]. Mono signals are
shaped (L,), stereo signals (2, L) channels-first. Files on disk are
16-bit PCM (scipy convention: frames x channels).
"""

from __future__ import annotations

import os

import numpy as np
from scipy.io import wavfile


def write_wav(path: str | os.PathLike, data: np.ndarray, sample_rate: int = 8000) -> None:
    """Write a mono (L,) or stereo (2, L) float waveform as 16-bit PCM."""
    x = np.asarray(data, dtype=np.float64)
    if x.ndim == 2:
        if x.shape[0] not in (1, 2):
            raise ValueError(f"expected (channels, L) with 1 or 2 channels, got {x.shape}")
        x = x.T  # scipy wants frames x channels
    elif x.ndim != 1:
        raise ValueError(f"waveform must be 1-D or 2-D, got shape {x.shape}")
    pcm = np.clip(np.round(x * 32767.0), -32768, 32767).astype(np.int16)
    wavfile.write(os.fspath(path), sample_rate, pcm)


def read_wav(path: str | os.PathLike) -> tuple[np.ndarray, int]:
    """Read a 16-bit PCM WAV. Returns (waveform, sample_rate); stereo as (2, L)."""
    sample_rate, pcm = wavfile.read(os.fspath(path))
    if pcm.dtype != np.int16:
        raise ValueError(f"{path}: expected 16-bit PCM, got dtype {pcm.dtype}")
    x = pcm.astype(np.float64) / 32768.0
    if x.ndim == 2:
        x = x.T
    return x, sample_rate
