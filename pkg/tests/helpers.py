"""Shared test utilities: micro configs, gradient checks, brute-force oracles."""

from __future__ import annotations

from itertools import permutations

import numpy as np
import torch

from sdnet.config import ModelConfig
from sdnet.inference import SetInference
from sdnet.objectives import sisnr


def micro_model_config(n_speakers: int = 4, **overrides) -> ModelConfig:
    """Small model for fast tests; geometry (kernel/stride) stays at 40/20."""
    params = dict(
        encoder_channels=8,
        blstm_hidden=8,
        blstm_layers=1,
        decoder_hidden=16,
        decoder_layers=1,
        attention_dim=8,
        output_proj_dim=8,
        embedding_dim=8,
        bottleneck_channels=8,
        n_speakers=n_speakers,
        n_directions=5,
        tcn_blocks=1,
        tcn_layers_per_block=2,
        tcn_hidden=16,
    )
    params.update(overrides)
    return ModelConfig(**params)


def toy_inference(seed: int, n_speakers: int = 1, n_directions: int = 1, max_steps: int = 2) -> SetInference:
    """Tiny double-precision decoder pair for beam-search oracles."""
    torch.manual_seed(seed)
    inf = SetInference(
        feature_dim=6,
        blstm_hidden=4,
        blstm_layers=1,
        n_speakers=n_speakers,
        n_directions=n_directions,
        decoder_hidden=8,
        decoder_layers=1,
        embedding_dim=4,
        attn_dim=4,
        proj_dim=4,
        max_steps=max_steps,
    )
    return inf.double().eval()


def gradient_check(loss_fn, parameters, coords_per_param: int = 20, eps: float = 1e-6, seed: int = 0) -> float:
    """Relative error between analytic and central finite-difference gradients.

    loss_fn() must rebuild the graph each call. Samples up to
    coords_per_param coordinates per tensor; returns
    ||g_analytic - g_fd|| / max(||g_analytic||, ||g_fd||).
    """
    params = [p for p in parameters if p.requires_grad]
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()

    rng = np.random.default_rng(seed)
    analytic, numeric = [], []
    with torch.no_grad():
        for p in params:
            grad = p.grad
            if grad is None:
                grad = torch.zeros_like(p)
            flat = p.view(-1)
            n = flat.numel()
            picks = rng.choice(n, size=min(coords_per_param, n), replace=False)
            for idx in picks:
                orig = flat[idx].item()
                step = eps * max(1.0, abs(orig))
                flat[idx] = orig + step
                plus = float(loss_fn())
                flat[idx] = orig - step
                minus = float(loss_fn())
                flat[idx] = orig
                numeric.append((plus - minus) / (2 * step))
                analytic.append(float(grad.view(-1)[idx]))
    a = np.asarray(analytic)
    f = np.asarray(numeric)
    denom = max(np.linalg.norm(a), np.linalg.norm(f), 1e-30)
    return float(np.linalg.norm(a - f) / denom)


def exhaustive_decode(inf: SetInference, features: torch.Tensor, max_steps: int | None = None):
    """Brute-force enumeration of every (speaker, direction) pair sequence.

    Independent of the beam bookkeeping: walks all non-BOS token pairs
    recursively through the module's step primitives, scoring by summed
    log-probabilities, terminating on either stream's EOS. Returns
    (tokens, score, truncated) of the best terminated sequence, falling back
    to the best truncated one.
    """
    max_steps = max_steps or inf.max_steps
    h = inf.encode_context(features.unsqueeze(0))
    h_proj = (
        inf.spk_decoder.attention.project_context(h),
        inf.dir_decoder.attention.project_context(h),
    )
    spk0, dir0 = inf._init_streams(1, h.device, h.dtype)
    outcomes = []

    spk_tokens = [t for t in range(inf.spk_decoder.vocab) if t != inf.spk_decoder.bos]
    dir_tokens = [t for t in range(inf.dir_decoder.vocab) if t != inf.dir_decoder.bos]

    def recurse(depth, spk, dir_, score, tokens):
        (spk_state, y_spk, log_spk), (dir_state, y_dir, log_dir), _ = inf._advance(h, h_proj, spk, dir_)
        for ts in spk_tokens:
            for td in dir_tokens:
                s2 = score + float(log_spk[0, ts] + log_dir[0, td])
                seq = tokens + [(ts, td)]
                done = ts == inf.spk_decoder.eos or td == inf.dir_decoder.eos
                if done:
                    outcomes.append((s2, seq, False))
                elif depth + 1 >= max_steps:
                    outcomes.append((s2, seq, True))
                else:
                    from sdnet.inference import _StreamState

                    recurse(
                        depth + 1,
                        _StreamState(spk_state, y_spk, torch.tensor([ts])),
                        _StreamState(dir_state, y_dir, torch.tensor([td])),
                        s2,
                        seq,
                    )

    with torch.no_grad():
        recurse(0, spk0, dir0, 0.0, [])
    finished = [o for o in outcomes if not o[2]]
    pool = finished if finished else outcomes
    best = max(pool, key=lambda o: o[0])
    return best[1], best[0], best[2]


def pit_best_sisnr(estimates: torch.Tensor, references: torch.Tensor, clamp_db: float = 60.0):
    """Best mean SiSNR over all output/target permutations (oracle pairing)."""
    n = estimates.shape[0]
    best_val, best_perm = -np.inf, None
    for perm in permutations(range(n)):
        val = float(torch.stack([sisnr(estimates[i], references[j], clamp_db=clamp_db) for i, j in enumerate(perm)]).mean())
        if val > best_val:
            best_val, best_perm = val, perm
    return best_val, best_perm


def result_tokens(result) -> list[tuple[int, int]]:
    return [(s.speaker_token, s.direction_token) for s in result.steps]
