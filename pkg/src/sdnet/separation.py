"""Mask-and-decode separation over TCN-processed mixture features.

A learned 1x1 bottleneck maps the 512-wide encoder concatenation to the
256-dim mask space; a stack of dilated depth-wise separable convolutions
with residual connections produces a sigmoid-scaled gate; each inferred
source mask multiplies in and a transposed convolution reconstructs the
waveform.
"""

from __future__ import annotations

import torch
import torch.nn as nn


class ChannelwiseLayerNorm(nn.Module):
    """Per-frame normalization over channels, (B, C, T) layout.

    Frame-local by construction, so the separator's receptive field stays
    exactly the dilation sum of its convolutions.
    """

    def __init__(self, channels: int, eps: float = 1e-8):
        super().__init__()
        self.gain = nn.Parameter(torch.ones(1, channels, 1))
        self.bias = nn.Parameter(torch.zeros(1, channels, 1))
        self.eps = eps

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        mean = x.mean(dim=1, keepdim=True)
        var = x.var(dim=1, keepdim=True, unbiased=False)
        return self.gain * (x - mean) / torch.sqrt(var + self.eps) + self.bias


class TCNLayer(nn.Module):
    """Residual depth-wise separable convolution with symmetric dilation padding."""

    def __init__(self, channels: int, hidden: int, kernel: int, dilation: int):
        super().__init__()
        pad = dilation * (kernel - 1) // 2
        self.expand = nn.Conv1d(channels, hidden, 1)
        self.prelu1 = nn.PReLU()
        self.norm1 = ChannelwiseLayerNorm(hidden)
        self.depthwise = nn.Conv1d(hidden, hidden, kernel, dilation=dilation, padding=pad, groups=hidden)
        self.prelu2 = nn.PReLU()
        self.norm2 = ChannelwiseLayerNorm(hidden)
        self.project = nn.Conv1d(hidden, channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.norm1(self.prelu1(self.expand(x)))
        y = self.norm2(self.prelu2(self.depthwise(y)))
        return x + self.project(y)


class Separator(nn.Module):
    """Bottleneck, TCN gate, per-source masking, transposed-conv decoding."""

    def __init__(
        self,
        input_dim: int = 512,
        bottleneck_channels: int = 256,
        blocks: int = 4,
        layers_per_block: int = 8,
        hidden: int = 512,
        kernel: int = 3,
        decoder_kernel: int = 40,
        decoder_stride: int = 20,
    ):
        super().__init__()
        self.bottleneck_conv = nn.Conv1d(input_dim, bottleneck_channels, 1)
        self.layers = nn.ModuleList(
            TCNLayer(bottleneck_channels, hidden, kernel, dilation=2**r)
            for _ in range(blocks)
            for r in range(layers_per_block)
        )
        self.output_conv = nn.Conv1d(bottleneck_channels, bottleneck_channels, 1)
        self.decoder_conv = nn.ConvTranspose1d(
            bottleneck_channels, 1, decoder_kernel, stride=decoder_stride
        )
        self.receptive_field = sum(
            2**r * (kernel - 1) // 2 for _ in range(blocks) for r in range(layers_per_block)
        )

    @staticmethod
    def _to_batched_cT(x: torch.Tensor) -> tuple[torch.Tensor, bool]:
        single = x.dim() == 2
        x = x.unsqueeze(0) if single else x
        return x.transpose(1, 2), single  # (B, C, T)

    def bottleneck(self, features: torch.Tensor) -> torch.Tensor:
        """Learned 1x1 map (..., T, input_dim) -> (..., T, bottleneck_channels)."""
        x, single = self._to_batched_cT(features)
        out = self.bottleneck_conv(x).transpose(1, 2)
        return out.squeeze(0) if single else out

    def tcn_forward(self, features: torch.Tensor) -> torch.Tensor:
        """Dilated residual stack plus sigmoid, output strictly in (0, 1)."""
        x, single = self._to_batched_cT(features)
        for layer in self.layers:
            x = layer(x)
        out = torch.sigmoid(self.output_conv(x)).transpose(1, 2)
        return out.squeeze(0) if single else out

    def decode_waveform(self, masked: torch.Tensor) -> torch.Tensor:
        """Transposed convolution (..., T, C) -> waveform (..., (T-1)*stride + kernel)."""
        x, single = self._to_batched_cT(masked)
        wave = self.decoder_conv(x).squeeze(1)
        return wave.squeeze(0) if single else wave


def apply_mask(features: torch.Tensor, tcn_out: torch.Tensor, source_mask: torch.Tensor) -> torch.Tensor:
    """Element-wise product features * tcn_out * mask, mask broadcast over frames.

    features, tcn_out: (..., T, C); source_mask: (..., C).
    """
    if features.shape != tcn_out.shape:
        raise ValueError(f"feature shapes differ: {tuple(features.shape)} vs {tuple(tcn_out.shape)}")
    if source_mask.shape[-1] != features.shape[-1]:
        raise ValueError(
            f"mask dim {source_mask.shape[-1]} does not match feature channels {features.shape[-1]}"
        )
    return features * tcn_out * source_mask.unsqueeze(-2)


def separate(mixture: torch.Tensor, model, mode: str = "beam", beam_width: int = 3):
    """Full pipeline on one stereo mixture; see SDNet.separate."""
    return model.separate(mixture, mode=mode, beam_width=beam_width)
