"""Evaluation over manifests: per-example metrics, aggregates, reports.

Output pairing is positional (decode order against energy-sorted targets)
over the first min(n_pred, n_true) pairs. SDR here is the delay-projection
variant; reports label it sdri accordingly.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig
from .model import SDNet
from .objectives import count_accuracy, improvement, sdr, sisnr
from .training import LoadedExample, load_dataset

log = logging.getLogger(__name__)


@dataclass
class EvalRecord:
    example_id: str
    n_true: int
    n_pred: int
    sisnri: float | None
    sdri: float | None
    speaker_tokens: list[int]
    direction_tokens: list[int]
    log_score: float
    truncated: bool


def _pairwise_metrics(
    estimates: list[torch.Tensor],
    targets: torch.Tensor,
    mixture_ref: torch.Tensor,
    sdr_filter_len: int,
    compute_sdr: bool = True,
) -> tuple[float | None, float | None]:
    n = min(len(estimates), targets.shape[0])
    if n == 0:
        return None, None
    sisnri_vals, sdri_vals = [], []
    mix = mixture_ref.numpy()
    for i in range(n):
        est = estimates[i].numpy()
        ref = targets[i].numpy()[: est.shape[-1]]
        sisnri_vals.append(
            improvement(lambda a, b: float(sisnr(a, b, clamp_db=60.0)), est, ref, mix[: est.shape[-1]])
        )
        if compute_sdr:
            sdri_vals.append(
                improvement(sdr, est, ref, mix[: est.shape[-1]], filter_len=sdr_filter_len)
            )
    return float(np.mean(sisnri_vals)), (float(np.mean(sdri_vals)) if compute_sdr else None)


def evaluate_dataset(
    model: SDNet,
    examples: list[LoadedExample],
    beam_width: int = 3,
    mode: str = "beam",
    sdr_filter_len: int = 512,
    compute_sdr: bool = True,
) -> tuple[list[EvalRecord], dict]:
    """Separate every example and collect metrics.

    mode "beam"/"greedy" uses inferred counts; "oracle" feeds true tokens.
    """
    model.eval()
    records = []
    for ex in examples:
        kwargs = {}
        if mode == "oracle":
            kwargs = {"spk_labels": ex.speaker_labels, "dir_labels": ex.direction_labels}
        sources, result = model.separate(ex.mixture, mode=mode, beam_width=beam_width, **kwargs)
        sisnri, sdri = _pairwise_metrics(
            [s.waveform for s in sources],
            ex.targets,
            ex.mixture[0],
            sdr_filter_len,
            compute_sdr=compute_sdr,
        )
        records.append(
            EvalRecord(
                example_id=ex.example_id,
                n_true=len(ex.speaker_labels),
                n_pred=len(sources),
                sisnri=sisnri,
                sdri=sdri,
                speaker_tokens=[s.speaker_token for s in sources],
                direction_tokens=[s.direction_token for s in sources],
                log_score=result.log_score,
                truncated=result.truncated,
            )
        )
    summary = summarize(records)
    return records, summary


def count_sources_batch(model: SDNet, examples: list[LoadedExample], batch_size: int = 16) -> list[int]:
    """Fast greedy source counting (no separation) over equal-length examples."""
    model.eval()
    counts = []
    with torch.no_grad():
        for i in range(0, len(examples), batch_size):
            chunk = examples[i : i + batch_size]
            stereo = torch.stack([ex.mixture for ex in chunk])
            _, feats_inf = model.frontend(stereo)
            results = model.inference.greedy_decode_batch(feats_inf)
            counts.extend(r.n_sources for r in results)
    return counts


def summarize(records: list[EvalRecord]) -> dict:
    sisnris = [r.sisnri for r in records if r.sisnri is not None]
    sdris = [r.sdri for r in records if r.sdri is not None]
    return {
        "n_examples": len(records),
        "count_accuracy": count_accuracy([r.n_pred for r in records], [r.n_true for r in records]),
        "mean_sisnri": float(np.mean(sisnris)) if sisnris else None,
        "mean_sdri": float(np.mean(sdris)) if sdris else None,
    }


def write_report(records: list[EvalRecord], summary: dict, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "per_example.jsonl", "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(asdict(r)) + "\n")
    with open(out_dir / "summary.csv", "w", encoding="utf-8") as f:
        keys = list(summary.keys())
        f.write(",".join(keys) + "\n")
        f.write(",".join(str(summary[k]) for k in keys) + "\n")

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    sisnris = [r.sisnri for r in records if r.sisnri is not None]
    if sisnris:
        axes[0].hist(sisnris, bins=20)
    axes[0].set_xlabel("SISNRi (dB)")
    axes[0].set_ylabel("examples")
    pairs = {}
    for r in records:
        pairs[(r.n_true, r.n_pred)] = pairs.get((r.n_true, r.n_pred), 0) + 1
    labels = [f"{t}->{p}" for t, p in sorted(pairs)]
    axes[1].bar(labels, [pairs[k] for k in sorted(pairs)])
    axes[1].set_xlabel("true -> predicted count")
    fig.tight_layout()
    fig.savefig(out_dir / "summary.png", dpi=100)
    plt.close(fig)


def cmd_eval(
    cfg: RunConfig,
    checkpoint_path: str | Path,
    split: str = "test",
    mode: str = "beam",
    beam_width: int | None = None,
) -> dict:
    from .training import load_checkpoint

    manifest = cfg.dataset_dir() / split / "manifest.jsonl"
    if not manifest.exists():
        raise FileNotFoundError(f"manifest not found: {manifest}")
    if not Path(checkpoint_path).exists():
        raise FileNotFoundError(f"checkpoint not found: {checkpoint_path}")
    model, _, _ = load_checkpoint(checkpoint_path)
    examples = load_dataset(manifest)
    width = beam_width if beam_width is not None else cfg.eval.beam_width
    records, summary = evaluate_dataset(
        model, examples, beam_width=width, mode=mode, sdr_filter_len=cfg.eval.sdr_filter_len
    )
    out_dir = Path(cfg.run_dir) / f"eval_{split}" / mode
    write_report(records, summary, out_dir)
    log.info("eval %s (%s): %s", split, mode, summary)
    return summary


def cmd_separate(
    checkpoint_path: str | Path,
    wav_in: str | Path,
    out_dir: str | Path,
    beam_width: int = 3,
) -> list[Path]:
    """Separate one stereo WAV into per-source mono WAVs with JSON sidecars."""
    from .audio import read_wav, write_wav
    from .training import load_checkpoint

    model, cfg, _ = load_checkpoint(checkpoint_path)
    wave, rate = read_wav(wav_in)
    if wave.ndim != 2 or wave.shape[0] != 2:
        raise SystemExit("input must be a stereo WAV; got a mono file")
    if rate != cfg.model.sample_rate:
        raise SystemExit(f"input rate {rate} Hz does not match the model's {cfg.model.sample_rate} Hz")

    sources, result = model.separate(
        torch.as_tensor(wave, dtype=torch.float32), mode="beam", beam_width=beam_width
    )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if not sources:
        log.warning("no sources inferred (EOS at step 1); writing diagnostics only")
    for i, src in enumerate(sources):
        wav_path = out_dir / f"source_{i:02d}.wav"
        write_wav(wav_path, src.waveform.numpy(), cfg.model.sample_rate)
        sidecar = {
            "speaker_token": src.speaker_token,
            "direction_token": src.direction_token,
            "log_score": result.log_score,
        }
        with open(out_dir / f"source_{i:02d}.json", "w", encoding="utf-8") as f:
            json.dump(sidecar, f, indent=2)
        written.append(wav_path)
    with open(out_dir / "separation.json", "w", encoding="utf-8") as f:
        json.dump(
            {
                "n_sources": len(sources),
                "log_score": result.log_score,
                "truncated": result.truncated,
                "empty": not sources,
            },
            f,
            indent=2,
        )
    return written
