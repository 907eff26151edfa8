"""Training loss and separation metrics.

The composite loss combines a negated scale-invariant SNR term with
cross-entropy over the speaker and direction token sequences, weighted by
lambda. SDR uses a least-squares projection onto delayed references.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import torch
from scipy.linalg import solve
from scipy.signal import fftconvolve


def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(np.asarray(x), dtype=torch.float64)


def sisnr(est, ref, clamp_db: float = 30.0, eps: float = 1e-12) -> torch.Tensor:
    """Scale-invariant SNR in dB over the trailing axis, clamped to +-clamp_db.

    Both signals are mean-centered; the target component is the projection
    of the estimate onto the reference. Differentiable; accepts any leading
    batch shape. The clamp is straight-through: values saturate but the
    gradient stays the identity, so sources starting below the floor still
    receive training signal (a hard clamp stalls them permanently).
    """
    est, ref = _as_tensor(est), _as_tensor(ref)
    if est.shape != ref.shape:
        raise ValueError(f"shape mismatch {tuple(est.shape)} vs {tuple(ref.shape)}")
    est = est - est.mean(dim=-1, keepdim=True)
    ref = ref - ref.mean(dim=-1, keepdim=True)
    ref_pow = (ref**2).sum(dim=-1, keepdim=True)
    if torch.any(ref_pow == 0):
        raise ValueError("reference signal is identically zero")
    target = (est * ref).sum(dim=-1, keepdim=True) / ref_pow * ref
    noise = est - target
    ratio = (target**2).sum(dim=-1) / ((noise**2).sum(dim=-1) + eps)
    value = 10.0 * torch.log10(ratio + eps)
    return value + (torch.clamp(value, -clamp_db, clamp_db) - value).detach()


def sdr(est, ref, filter_len: int = 512, clamp_db: float = 60.0) -> float:
    """Projection-based signal-to-distortion ratio in dB.

    The estimate is projected (least squares, Toeplitz normal equations)
    onto the span of the reference delayed by 0..filter_len-1 samples.
    Singular systems fall back to a ridge-regularized solve with a warning.
    """
    est = np.asarray(est, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if est.shape != ref.shape or est.ndim != 1:
        raise ValueError("est and ref must be equal-length 1-D signals")
    if len(est) <= filter_len:
        raise ValueError(f"signals of length {len(est)} too short for filter_len {filter_len}")

    n = len(ref)
    # Gram matrix of zero-padded delays restricted to the observation window:
    # G[k, l] = sum_{m=0}^{n-1-max(k,l)} ref[m] ref[m+|k-l|], assembled from
    # per-lag cumulative sums (a pure Toeplitz form would miss edge terms and
    # break exactness for in-filter delays).
    lag_cumsum = np.zeros((filter_len, n + 1))
    for d in range(filter_len):
        lag_cumsum[d, 1 : n + 1 - d] = np.cumsum(ref[: n - d] * ref[d:])
        lag_cumsum[d, n + 1 - d :] = lag_cumsum[d, n - d]
    k = np.arange(filter_len)
    d_grid = np.abs(k[:, None] - k[None, :])
    m_grid = n - np.maximum(k[:, None], k[None, :])
    gram = lag_cumsum[d_grid, m_grid]

    cross = fftconvolve(est, ref[::-1])
    b = cross[n - 1 : n - 1 + filter_len]
    try:
        coeffs = solve(gram, b, assume_a="pos")
        if not np.all(np.isfinite(coeffs)):
            raise np.linalg.LinAlgError("non-finite solution")
    except np.linalg.LinAlgError:
        warnings.warn("singular projection system; retrying with ridge regularization")
        ridge = 1e-8 * np.trace(gram)
        coeffs = solve(gram + ridge * np.eye(filter_len), b, assume_a="pos")

    proj = np.convolve(ref, coeffs)[:n]
    num = float(np.sum(proj**2))
    den = float(np.sum((est - proj) ** 2))
    value = 10.0 * np.log10((num + 1e-300) / (den + 1e-300))
    return float(np.clip(value, -clamp_db, clamp_db))


def improvement(metric, est, ref, mixture_ref_channel, **kwargs) -> float:
    """metric(est, ref) - metric(mixture_ref_channel, ref), in dB."""
    return float(metric(est, ref, **kwargs)) - float(metric(mixture_ref_channel, ref, **kwargs))


def sequence_ce(step_distributions, labels_with_eos, eps: float = 1e-12) -> torch.Tensor:
    """Mean negative log-likelihood over decoding steps, in nats.

    step_distributions: (S, V) or (B, S, V) probabilities;
    labels_with_eos: (S,) or (B, S) integer tokens ending in EOS.
    """
    dists = _as_tensor(step_distributions)
    labels = torch.as_tensor(np.asarray(labels_with_eos), dtype=torch.long)
    if dists.shape[:-1] != labels.shape:
        raise ValueError(f"got {tuple(dists.shape[:-1])} distributions for {tuple(labels.shape)} labels")
    picked = torch.gather(dists, -1, labels.unsqueeze(-1)).squeeze(-1)
    return (-torch.log(picked + eps)).mean()


@dataclass
class LossBreakdown:
    sisnr_ss: float
    ce_spk: float
    ce_dir: float
    total: torch.Tensor  # keeps the graph for backward
    lam: float

    def as_dict(self) -> dict:
        return {
            "sisnr_ss": self.sisnr_ss,
            "ce_spk": self.ce_spk,
            "ce_dir": self.ce_dir,
            "total": float(self.total.detach()),
            "lambda": self.lam,
        }


def total_loss(
    separated,
    targets,
    spk_dists,
    dir_dists,
    spk_labels,
    dir_labels,
    lam: float = 5.0,
    sisnr_clamp_db: float = 30.0,
) -> LossBreakdown:
    """Composite loss: -mean SiSNR + lam * (speaker CE + direction CE).

    Pairing of separated outputs to targets is positional; targets and label
    sequences are expected energy-sorted, so no permutation search happens.
    Label sequences must already end in EOS (one step more than the masks).
    """
    separated, targets = _as_tensor(separated), _as_tensor(targets)
    if separated.shape != targets.shape:
        raise ValueError(f"separated {tuple(separated.shape)} vs targets {tuple(targets.shape)}")
    sisnr_ss = sisnr(separated, targets, clamp_db=sisnr_clamp_db).mean()
    ce_spk = sequence_ce(spk_dists, spk_labels)
    ce_dir = sequence_ce(dir_dists, dir_labels)
    total = -sisnr_ss + lam * (ce_spk + ce_dir)
    return LossBreakdown(
        sisnr_ss=float(sisnr_ss.detach()),
        ce_spk=float(ce_spk.detach()),
        ce_dir=float(ce_dir.detach()),
        total=total,
        lam=lam,
    )


def count_accuracy(predicted_counts, true_counts) -> float:
    """Fraction of examples whose inferred source count matches the truth."""
    pred = [int(getattr(p, "n_sources", p)) for p in predicted_counts]
    true = [int(t) for t in true_counts]
    if len(pred) != len(true):
        raise ValueError("predicted and true count lists differ in length")
    if not pred:
        raise ValueError("empty inputs")
    return float(sum(p == t for p, t in zip(pred, true)) / len(pred))
