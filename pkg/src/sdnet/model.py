"""End-to-end separation model: frontend -> set inference -> masked separation."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .config import ModelConfig
from .frontend import FeatureExtractor
from .inference import InferenceResult, SetInference
from .separation import Separator, apply_mask


@dataclass
class SeparatedSource:
    waveform: torch.Tensor  # (L',)
    speaker_token: int
    direction_token: int


class SDNet(nn.Module):
    """Dual-channel separation with inferred per-source masks.

    The frontend yields F (separation features) and F_o (inference
    features); the inference module decodes one 256-dim mask per source
    until EOS; the separator gates bottlenecked features with the shared
    TCN output and each mask, then decodes waveforms. Output count follows
    the decoded mask count, not a fixed speaker total.
    """

    def __init__(self, cfg: ModelConfig | None = None):
        super().__init__()
        cfg = cfg or ModelConfig()
        if cfg.bottleneck_channels != cfg.embedding_dim:
            raise ValueError(
                "bottleneck_channels must equal embedding_dim: masks multiply the bottlenecked features"
            )
        self.cfg = cfg
        self.frontend = FeatureExtractor(
            channels=cfg.encoder_channels,
            kernel=cfg.encoder_kernel,
            stride=cfg.encoder_stride,
            activation=cfg.encoder_activation,
            iac_enabled=cfg.iac_enabled,
            iac_scaled=cfg.iac_scaled,
        )
        self.inference = SetInference(
            feature_dim=3 * cfg.encoder_channels,
            blstm_hidden=cfg.blstm_hidden,
            blstm_layers=cfg.blstm_layers,
            n_speakers=cfg.n_speakers,
            n_directions=cfg.n_directions,
            decoder_hidden=cfg.decoder_hidden,
            decoder_layers=cfg.decoder_layers,
            embedding_dim=cfg.embedding_dim,
            attn_dim=cfg.attention_dim,
            proj_dim=cfg.output_proj_dim,
            output_activation=cfg.output_activation,
            max_steps=cfg.max_decode_steps,
        )
        self.separator = Separator(
            input_dim=2 * cfg.encoder_channels,
            bottleneck_channels=cfg.bottleneck_channels,
            blocks=cfg.tcn_blocks,
            layers_per_block=cfg.tcn_layers_per_block,
            hidden=cfg.tcn_hidden,
            kernel=cfg.tcn_kernel,
            decoder_kernel=cfg.encoder_kernel,
            decoder_stride=cfg.encoder_stride,
        )

    @property
    def speaker_eos(self) -> int:
        return self.inference.spk_decoder.eos

    @property
    def direction_eos(self) -> int:
        return self.inference.dir_decoder.eos

    def forward_teacher(
        self,
        mixture: torch.Tensor,
        spk_labels: torch.Tensor,
        dir_labels: torch.Tensor,
        embedding_source: str = "model",
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Teacher-forced pass for training.

        mixture: (B, 2, L); labels: (B, n) sharing one source count.
        Returns (estimates (B, n, L'), spk_dists (B, n+1, V), dir_dists).
        """
        feats, feats_inf = self.frontend(mixture)
        spk_dists, dir_dists, masks = self.inference.teacher_forced_batch(
            feats_inf, spk_labels, dir_labels, embedding_source=embedding_source
        )
        bottled = self.separator.bottleneck(feats)
        gate = self.separator.tcn_forward(bottled)
        batch, n_src, _ = masks.shape
        masked = bottled.unsqueeze(1) * gate.unsqueeze(1) * masks.unsqueeze(2)  # (B, n, T, C)
        flat = masked.reshape(batch * n_src, *masked.shape[2:])
        waves = self.separator.decode_waveform(flat)
        return waves.reshape(batch, n_src, -1), spk_dists, dir_dists

    @torch.no_grad()
    def separate(
        self,
        mixture: torch.Tensor,
        mode: str = "beam",
        beam_width: int = 3,
        spk_labels=None,
        dir_labels=None,
    ) -> tuple[list[SeparatedSource], InferenceResult]:
        """Separate one stereo mixture (2, L).

        mode "beam" or "greedy" infers the source set; mode "oracle" feeds
        ground-truth token sequences through the decoders instead (an upper
        bound used in evaluation). Returns one SeparatedSource per inferred
        mask; an empty list (with the InferenceResult as diagnostic) when
        the first decoded step is already EOS.
        """
        if mixture.dim() != 2 or mixture.shape[0] != 2:
            raise ValueError(f"expected a (2, L) stereo mixture, got {tuple(mixture.shape)}")
        feats, feats_inf = self.frontend(mixture)
        if mode == "beam":
            result = self.inference.beam_search(feats_inf, width=beam_width)
        elif mode == "greedy":
            result = self.inference.infer_sources(feats_inf, mode="greedy")
        elif mode == "oracle":
            result = self.inference.infer_sources(
                feats_inf,
                mode="teacher_forced",
                spk_labels=spk_labels,
                dir_labels=dir_labels,
                embedding_source="labels",
            )
        else:
            raise ValueError(f"unknown separation mode {mode!r}")

        sources = []
        if result.masks:
            bottled = self.separator.bottleneck(feats)
            gate = self.separator.tcn_forward(bottled)
            for m in result.masks:
                z = apply_mask(bottled, gate, m.sm.to(bottled.dtype))
                wave = self.separator.decode_waveform(z)
                sources.append(
                    SeparatedSource(
                        waveform=wave,
                        speaker_token=m.speaker_token,
                        direction_token=m.direction_token,
                    )
                )
        return sources, result


def build_model(cfg) -> SDNet:
    """Construct an SDNet from a RunConfig or ModelConfig."""
    model_cfg = getattr(cfg, "model", cfg)
    return SDNet(model_cfg)
