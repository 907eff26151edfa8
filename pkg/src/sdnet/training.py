"""Training loop: deterministic batching, checkpointing, plateau LR halving.

Batch composition is a pure function of (seed, step), so resuming from a
checkpoint replays the exact uninterrupted run. Batches group examples with
the same source count so teacher forcing runs a single shared step count.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig, arch_fingerprint, config_from_dict
from .manifest import load_entry_audio, read_manifest
from .model import SDNet, build_model
from .objectives import LossBreakdown, total_loss

log = logging.getLogger(__name__)


class TrainingAborted(RuntimeError):
    pass


@dataclass
class LoadedExample:
    example_id: str
    mixture: torch.Tensor  # (2, L) float32
    targets: torch.Tensor  # (n, L) float32
    speaker_labels: list[int]
    direction_labels: list[int]


def load_dataset(manifest_path: str | Path) -> list[LoadedExample]:
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    examples = []
    for entry in read_manifest(manifest_path):
        mixture, targets = load_entry_audio(entry, base)
        examples.append(
            LoadedExample(
                example_id=entry.example_id,
                mixture=torch.as_tensor(mixture, dtype=torch.float32),
                targets=torch.as_tensor(targets, dtype=torch.float32),
                speaker_labels=list(entry.speaker_labels),
                direction_labels=list(entry.direction_labels),
            )
        )
    if not examples:
        raise ValueError(f"{manifest_path} contains no examples")
    return examples


class PlateauHalver:
    """Halve the learning rate when the monitored value stops improving."""

    def __init__(self, optimizer, patience: int, min_delta: float, lr_floor: float):
        self.optimizer = optimizer
        self.patience = patience
        self.min_delta = min_delta
        self.lr_floor = lr_floor
        self.best = float("inf")
        self.counter = 0

    @property
    def lr(self) -> float:
        return self.optimizer.param_groups[0]["lr"]

    def step(self, value: float) -> None:
        if value < self.best - self.min_delta:
            self.best = value
            self.counter = 0
            return
        self.counter += 1
        if self.counter >= self.patience:
            new_lr = max(self.lr * 0.5, self.lr_floor)
            for group in self.optimizer.param_groups:
                group["lr"] = new_lr
            self.counter = 0
            log.info("plateau: learning rate halved to %g", new_lr)

    def state_dict(self) -> dict:
        return {"best": self.best, "counter": self.counter}

    def load_state_dict(self, state: dict) -> None:
        self.best = state["best"]
        self.counter = state["counter"]


def _group_by_count(examples: list[LoadedExample]) -> dict[int, list[int]]:
    groups: dict[int, list[int]] = {}
    for i, ex in enumerate(examples):
        groups.setdefault(len(ex.speaker_labels), []).append(i)
    return groups


def batch_indices(groups: dict[int, list[int]], step: int, seed: int, batch_size: int) -> list[int]:
    """Deterministic batch of examples sharing one source count."""
    rng = np.random.default_rng([int(seed), int(step), 0xBA7C])
    counts = sorted(groups)
    weights = np.array([len(groups[c]) for c in counts], dtype=np.float64)
    count = counts[rng.choice(len(counts), p=weights / weights.sum())]
    pool = groups[count]
    replace = len(pool) < batch_size
    picked = rng.choice(len(pool), size=batch_size, replace=replace)
    return [pool[i] for i in picked]


def _segment(ex: LoadedExample, seg_len: int, rng: np.random.Generator) -> tuple[torch.Tensor, torch.Tensor]:
    length = ex.mixture.shape[-1]
    if length <= seg_len:
        return ex.mixture, ex.targets
    start = int(rng.integers(0, length - seg_len + 1))
    return ex.mixture[:, start : start + seg_len], ex.targets[:, start : start + seg_len]


def train_step(model: SDNet, optimizer, examples, indices, cfg: RunConfig, step: int) -> LossBreakdown:
    seg_len = int(round(cfg.train.segment_s * cfg.model.sample_rate))
    rng = np.random.default_rng([cfg.train.seed, step, 0x5E6])
    mixes, targets = zip(*(_segment(examples[i], seg_len, rng) for i in indices))
    mixture = torch.stack(mixes)
    target = torch.stack(targets)
    spk = torch.tensor([examples[i].speaker_labels for i in indices], dtype=torch.long)
    dirs = torch.tensor([examples[i].direction_labels for i in indices], dtype=torch.long)

    est, spk_dists, dir_dists = model.forward_teacher(mixture, spk, dirs)
    spk_eos = torch.cat([spk, torch.full((spk.shape[0], 1), model.speaker_eos)], dim=1)
    dir_eos = torch.cat([dirs, torch.full((dirs.shape[0], 1), model.direction_eos)], dim=1)
    breakdown = total_loss(
        est,
        target[..., : est.shape[-1]],
        spk_dists,
        dir_dists,
        spk_eos,
        dir_eos,
        lam=cfg.loss.lam,
        sisnr_clamp_db=cfg.loss.sisnr_clamp_db,
    )
    optimizer.zero_grad()
    breakdown.total.backward()
    torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.train.grad_clip)
    optimizer.step()
    return breakdown


def save_checkpoint(path: str | Path, model: SDNet, optimizer, halver: PlateauHalver, step: int, cfg: RunConfig, history: list[dict]) -> None:
    payload = {
        "step": step,
        "model_state": model.state_dict(),
        "optimizer_state": optimizer.state_dict(),
        "plateau_state": halver.state_dict(),
        "config": cfg.to_dict(),
        "arch_fingerprint": arch_fingerprint(cfg),
        "torch_rng": torch.get_rng_state(),
        "history": history,
    }
    path = Path(path)
    tmp = path.with_suffix(".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> tuple[SDNet, RunConfig, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    cfg = config_from_dict(payload["config"])
    model = build_model(cfg)
    model.load_state_dict(payload["model_state"])
    return model, cfg, payload


@dataclass
class TrainResult:
    checkpoint_path: Path
    history: list[dict] = field(default_factory=list)
    final_step: int = 0
    stopped_early: bool = False


def run_training(
    cfg: RunConfig,
    manifest_path: str | Path | None = None,
    resume_from: str | Path | None = None,
    stop_check=None,
    model: SDNet | None = None,
) -> TrainResult:
    """Optimize the composite loss over a manifest of simulated mixtures.

    stop_check(step, model) -> bool is polled every log_every steps; a True
    result ends training early (used for threshold-driven runs). Training is
    reproducible bit-wise for a fixed seed; a NaN loss aborts with the last
    checkpoint left intact.
    """
    run_dir = Path(cfg.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = Path(manifest_path) if manifest_path else cfg.dataset_dir() / "train" / "manifest.jsonl"
    examples = load_dataset(manifest_path)
    groups = _group_by_count(examples)

    torch.manual_seed(cfg.train.seed)
    if model is None:
        model = build_model(cfg)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.train.lr)
    halver = PlateauHalver(optimizer, cfg.train.plateau_patience, cfg.train.plateau_min_delta, cfg.train.lr_floor)

    start_step = 0
    history: list[dict] = []
    if resume_from is not None:
        payload = torch.load(resume_from, map_location="cpu", weights_only=False)
        model.load_state_dict(payload["model_state"])
        optimizer.load_state_dict(payload["optimizer_state"])
        halver.load_state_dict(payload["plateau_state"])
        torch.set_rng_state(payload["torch_rng"])
        start_step = payload["step"]
        history = list(payload["history"])
        log.info("resumed from %s at step %d", resume_from, start_step)

    ckpt_path = run_dir / "checkpoint.pt"
    stopped_early = False
    window: list[float] = []
    model.train()
    for step in range(start_step, cfg.train.steps):
        indices = batch_indices(groups, step, cfg.train.seed, cfg.train.batch_size)
        breakdown = train_step(model, optimizer, examples, indices, cfg, step)
        if not torch.isfinite(breakdown.total):
            raise TrainingAborted(
                f"non-finite loss at step {step}; last checkpoint retained at {ckpt_path}"
            )
        row = {"step": step, "lr": halver.lr, **breakdown.as_dict()}
        history.append(row)
        window.append(row["total"])
        if (step + 1) % cfg.train.log_every == 0:
            log.info(
                "step %d total %.3f sisnr %.2f ce_spk %.3f ce_dir %.3f lr %g",
                step, row["total"], row["sisnr_ss"], row["ce_spk"], row["ce_dir"], halver.lr,
            )
        if (step + 1) % cfg.train.plateau_window == 0:
            halver.step(float(np.mean(window)))
            window.clear()
        if (step + 1) % cfg.train.checkpoint_every == 0:
            save_checkpoint(ckpt_path, model, optimizer, halver, step + 1, cfg, history)
        if stop_check is not None and (step + 1) % cfg.train.log_every == 0:
            model.eval()
            should_stop = stop_check(step + 1, model)
            model.train()
            if should_stop:
                stopped_early = True
                log.info("stop condition met at step %d", step + 1)
                break

    final_step = history[-1]["step"] + 1 if history else start_step
    save_checkpoint(ckpt_path, model, optimizer, halver, final_step, cfg, history)
    _write_history(run_dir, history)
    return TrainResult(checkpoint_path=ckpt_path, history=history, final_step=final_step, stopped_early=stopped_early)


def _write_history(run_dir: Path, history: list[dict]) -> None:
    if not history:
        return
    csv_path = run_dir / "loss_curve.csv"
    with open(csv_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(history[0].keys()))
        writer.writeheader()
        writer.writerows(history)

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    steps = [row["step"] for row in history]
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    axes[0].plot(steps, [row["total"] for row in history])
    axes[0].set_xlabel("step")
    axes[0].set_ylabel("total loss")
    axes[1].plot(steps, [row["sisnr_ss"] for row in history], label="sisnr_ss (dB)")
    axes[1].plot(steps, [row["ce_spk"] for row in history], label="ce_spk")
    axes[1].plot(steps, [row["ce_dir"] for row in history], label="ce_dir")
    axes[1].set_xlabel("step")
    axes[1].legend()
    fig.tight_layout()
    fig.savefig(run_dir / "loss_curve.png", dpi=100)
    plt.close(fig)


def cmd_train(cfg: RunConfig, resume_from: str | Path | None = None) -> TrainResult:
    return run_training(cfg, resume_from=resume_from)
