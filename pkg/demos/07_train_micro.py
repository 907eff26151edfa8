"""End-to-end micro training run: simulate, train, evaluate, separate.

Uses a deliberately tiny model so the whole loop finishes in about a
minute on a laptop CPU. For the reference-scale recipe see configs/ and
the README. Run:

    python3 demos/07_train_micro.py
"""

from pathlib import Path

import torch

from sdnet.config import DataConfig, RunConfig, TrainConfig
from sdnet.evaluation import cmd_separate, evaluate_dataset
from sdnet.simulate import cmd_simulate
from sdnet.training import load_checkpoint, load_dataset, run_training

cfg = RunConfig()
cfg.model.encoder_channels = 32
cfg.model.blstm_hidden = 32
cfg.model.blstm_layers = 1
cfg.model.decoder_hidden = 64
cfg.model.decoder_layers = 1
cfg.model.attention_dim = 32
cfg.model.output_proj_dim = 32
cfg.model.embedding_dim = 32
cfg.model.bottleneck_channels = 32
cfg.model.tcn_blocks = 2
cfg.model.tcn_layers_per_block = 4
cfg.model.tcn_hidden = 64
cfg.model.n_speakers = 8
cfg.data = DataConfig(root="demo_out/data", name="micro", duration_s=0.5,
                      n_train=12, n_dev=6, n_test=6, mix_sizes=[2],
                      train_speakers=6, test_speakers=2, seed=5)
cfg.train = TrainConfig(steps=300, batch_size=4, log_every=50, checkpoint_every=150,
                        plateau_window=100, seed=0)
cfg.run_dir = "demo_out/micro_run"

print("simulating dataset ...")
paths = cmd_simulate(cfg)

print("training 300 steps ...")
result = run_training(cfg)
first, last = result.history[0], result.history[-1]
print(f"loss: {first['total']:.2f} -> {last['total']:.2f} "
      f"(SiSNR term {first['sisnr_ss']:.2f} -> {last['sisnr_ss']:.2f} dB)")
print(f"loss curve: {Path(cfg.run_dir) / 'loss_curve.png'}")

model, _, _ = load_checkpoint(result.checkpoint_path)
records, summary = evaluate_dataset(model, load_dataset(paths["train"]), beam_width=3, compute_sdr=False)
print(f"train-set count accuracy {summary['count_accuracy']:.2f}, "
      f"mean SISNRi {summary['mean_sisnri']}")

mix = sorted((Path(paths["test"]).parent / "audio").glob("*_mix.wav"))[0]
written = cmd_separate(result.checkpoint_path, mix, "demo_out/micro_separated", beam_width=3)
print(f"separated {mix.name} into {len(written)} source file(s) under demo_out/micro_separated/")
