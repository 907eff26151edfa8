"""Stereo waveform encoders and the inter-channel attention feature.

Each channel runs through its own learned 1-D convolution (kernel 40,
stride 20 at 8 kHz: 5 ms frames, 2.5 ms shift). The inter-channel attention
correlation (IAC) aligns channel-2 frames to channel 1 through a row-wise
softmax over frame similarities, exposing time/level differences to the
inference module without hand-crafted spatial features.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


def frame_count(n_samples: int, kernel: int = 40, stride: int = 20) -> int:
    if n_samples < kernel:
        raise ValueError(f"need at least {kernel} samples, got {n_samples}")
    return (n_samples - kernel) // stride + 1


def inter_channel_attention(e1: torch.Tensor, e2: torch.Tensor, scaled: bool = False) -> torch.Tensor:
    """Attention-weighted channel-2 features aligned to channel-1 frames.

    e1, e2: (..., T, C). Softmax runs over channel-2 frames for each
    channel-1 frame, so every attention row is a probability vector.
    """
    if e1.shape != e2.shape:
        raise ValueError(f"shape mismatch {tuple(e1.shape)} vs {tuple(e2.shape)}")
    scores = e1 @ e2.transpose(-1, -2)
    if scaled:
        scores = scores / e1.shape[-1] ** 0.5
    attn = torch.softmax(scores, dim=-1)
    return attn @ e2


def assemble_features(e1: torch.Tensor, e2: torch.Tensor, iac: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Concatenate along channels: F = [E1, E2] for separation, F_o = [IAC, E1, E2] for inference."""
    if not (e1.shape == e2.shape == iac.shape):
        raise ValueError("E1, E2 and IAC must share the same shape")
    return torch.cat([e1, e2], dim=-1), torch.cat([iac, e1, e2], dim=-1)


class FeatureExtractor(nn.Module):
    """Per-channel convolutional encoders plus IAC feature assembly.

    iac_enabled=False zeroes the IAC block of F_o (shape-preserving
    ablation). activation defaults to linear, matching time-domain encoder
    convention; "relu" is available.
    """

    def __init__(
        self,
        channels: int = 256,
        kernel: int = 40,
        stride: int = 20,
        activation: str = "linear",
        iac_enabled: bool = True,
        iac_scaled: bool = False,
    ):
        super().__init__()
        if activation not in ("linear", "relu"):
            raise ValueError(f"unknown encoder activation {activation!r}")
        self.channels = channels
        self.kernel = kernel
        self.stride = stride
        self.activation = activation
        self.iac_enabled = iac_enabled
        self.iac_scaled = iac_scaled
        self.encoders = nn.ModuleList(
            [nn.Conv1d(1, channels, kernel, stride=stride) for _ in range(2)]
        )

    def encode_channel(self, waveform: torch.Tensor, which: int) -> torch.Tensor:
        """Encode one channel. waveform: (L,) or (B, L); returns (..., T, channels)."""
        if which not in (1, 2):
            raise ValueError(f"channel index must be 1 or 2, got {which}")
        single = waveform.dim() == 1
        x = waveform.unsqueeze(0) if single else waveform
        if x.shape[-1] < self.kernel:
            raise ValueError(f"input of {x.shape[-1]} samples is shorter than one frame")
        out = self.encoders[which - 1](x.unsqueeze(1))  # (B, C, T)
        if self.activation == "relu":
            out = F.relu(out)
        out = out.transpose(1, 2)  # (B, T, C)
        return out.squeeze(0) if single else out

    def forward(self, stereo: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """stereo: (2, L) or (B, 2, L). Returns (F (..., T, 2C), F_o (..., T, 3C))."""
        if stereo.shape[-2] != 2:
            raise ValueError(f"expected 2 channels, got shape {tuple(stereo.shape)}")
        e1 = self.encode_channel(stereo[..., 0, :], which=1)
        e2 = self.encode_channel(stereo[..., 1, :], which=2)
        if self.iac_enabled:
            iac = inter_channel_attention(e1, e2, scaled=self.iac_scaled)
        else:
            iac = torch.zeros_like(e1)
        return assemble_features(e1, e2, iac)
