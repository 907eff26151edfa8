import copy
import json
from pathlib import Path

import numpy as np
import pytest
import torch

from helpers import micro_model_config
from sdnet import training as training_mod
from sdnet.config import (
    ConfigError,
    DataConfig,
    RunConfig,
    TrainConfig,
    arch_fingerprint,
    load_config,
    validate_config,
)
from sdnet.evaluation import cmd_eval, cmd_separate, count_sources_batch, evaluate_dataset
from sdnet.manifest import read_manifest
from sdnet.objectives import LossBreakdown
from sdnet.simulate import cmd_simulate
from sdnet.training import TrainingAborted, load_checkpoint, load_dataset, run_training

# frozen hash of the reference architecture hyperparameters; a mismatch
# means the defaults drifted
GOLDEN_ARCH_FINGERPRINT = "24236a586f43d68c7c1b5afdaf3888edac4ca3d67c068adc0446048a89c9a221"


def micro_run_config(tmp_path, **train_overrides) -> RunConfig:
    cfg = RunConfig()
    cfg.model = micro_model_config(n_speakers=6, n_directions=37)
    cfg.data = DataConfig(
        root=str(tmp_path / "data"),
        name="toy",
        duration_s=0.25,
        n_train=4,
        n_dev=3,
        n_test=3,
        mix_sizes=[2],
        train_speakers=4,
        test_speakers=2,
        seed=1,
    )
    params = dict(steps=10, batch_size=2, log_every=5, checkpoint_every=5, plateau_window=5, seed=0)
    params.update(train_overrides)
    cfg.train = TrainConfig(**params)
    cfg.run_dir = str(tmp_path / "run")
    return cfg


@pytest.fixture(scope="module")
def toy_dataset(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("toyset")
    cfg = micro_run_config(tmp)
    paths = cmd_simulate(cfg)
    return cfg, paths, tmp


class TestConfig:
    def test_golden_arch_fingerprint(self):
        assert arch_fingerprint(RunConfig()) == GOLDEN_ARCH_FINGERPRINT

    def test_fingerprint_ignores_training_params(self):
        cfg = RunConfig()
        cfg.train.lr = 3e-4
        cfg.train.steps = 17
        cfg.data.n_train = 999
        assert arch_fingerprint(cfg) == GOLDEN_ARCH_FINGERPRINT

    def test_fingerprint_tracks_model_dims(self):
        cfg = RunConfig()
        cfg.model.encoder_channels = 128
        assert arch_fingerprint(cfg) != GOLDEN_ARCH_FINGERPRINT

    def test_load_toml_with_lambda_alias(self, tmp_path):
        path = tmp_path / "conf.toml"
        path.write_text(
            "[model]\nn_speakers = 8\n\n[loss]\nlambda = 2.5\n\n[train]\nlr = 5e-4\n\n"
            "[data]\nn_train = 7\ntrain_speakers = 5\ntest_speakers = 3\n"
        )
        cfg = load_config(path)
        assert cfg.model.n_speakers == 8
        assert cfg.loss.lam == 2.5
        assert cfg.train.lr == 5e-4
        assert cfg.data.n_train == 7

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "conf.toml"
        path.write_text("[model]\nnot_a_knob = 3\n")
        with pytest.raises(ConfigError, match="not_a_knob"):
            load_config(path)

    def test_speaker_overlap_rejected(self):
        cfg = RunConfig()
        cfg.data.train_speaker_ids = [0, 1, 2]
        cfg.data.test_speaker_ids = [2, 3]
        with pytest.raises(ConfigError, match="overlap"):
            validate_config(cfg)

    def test_env_var_overrides_data_root(self, monkeypatch):
        cfg = RunConfig()
        cfg.data.root = "some/dir"
        monkeypatch.setenv("SDNET_DATA_DIR", "/elsewhere")
        assert cfg.dataset_dir() == Path("/elsewhere") / cfg.data.name
        monkeypatch.delenv("SDNET_DATA_DIR")
        assert cfg.dataset_dir() == Path("some/dir") / cfg.data.name


class TestSimulate:
    def test_splits_and_mix_sizes(self, tmp_path):
        cfg = micro_run_config(tmp_path)
        cfg.data.mix_sizes = [2, 3]
        cfg.data.test_speakers = 3
        cfg.model.n_speakers = 7
        cfg.data.n_train = 6
        paths = cmd_simulate(cfg)
        train_entries = read_manifest(paths["train"])
        sizes = {len(e.speaker_labels) for e in train_entries}
        assert sizes == {2, 3}
        train_spk = {s for e in train_entries for s in e.speaker_labels}
        test_spk = {s for e in read_manifest(paths["test"]) for s in e.speaker_labels}
        assert train_spk.isdisjoint(test_spk)
        dev_spk = {s for e in read_manifest(paths["dev"]) for s in e.speaker_labels}
        assert dev_spk <= set(range(cfg.data.train_speakers))

    def test_deterministic_manifests(self, tmp_path):
        cfg_a = micro_run_config(tmp_path / "a")
        cfg_b = micro_run_config(tmp_path / "b")
        pa = cmd_simulate(cfg_a)
        pb = cmd_simulate(cfg_b)
        assert Path(pa["train"]).read_text() == Path(pb["train"]).read_text()
        # audio bytes identical as well
        wav_a = sorted((Path(pa["train"]).parent / "audio").glob("*.wav"))
        wav_b = sorted((Path(pb["train"]).parent / "audio").glob("*.wav"))
        assert [p.read_bytes() for p in wav_a] == [p.read_bytes() for p in wav_b]


class TestTraining:
    def test_sanity_descent(self, toy_dataset):
        cfg, paths, tmp = toy_dataset
        cfg = copy.deepcopy(cfg)
        cfg.run_dir = str(tmp / "descent")
        cfg.train.steps = 200
        cfg.train.checkpoint_every = 100
        result = run_training(cfg, manifest_path=paths["train"])
        assert result.history[-1]["total"] < result.history[0]["total"]
        assert (Path(cfg.run_dir) / "loss_curve.csv").exists()
        assert (Path(cfg.run_dir) / "loss_curve.png").exists()

    def test_fixed_seed_reproduces_loss_curve(self, toy_dataset):
        cfg, paths, tmp = toy_dataset
        losses = []
        for attempt in range(2):
            run_cfg = copy.deepcopy(cfg)
            run_cfg.run_dir = str(tmp / f"repro_{attempt}")
            result = run_training(run_cfg, manifest_path=paths["train"])
            losses.append([row["total"] for row in result.history])
        assert losses[0] == losses[1]

    def test_resume_matches_uninterrupted(self, toy_dataset):
        cfg, paths, tmp = toy_dataset
        full_cfg = copy.deepcopy(cfg)
        full_cfg.run_dir = str(tmp / "full")
        full = run_training(full_cfg, manifest_path=paths["train"])

        half_cfg = copy.deepcopy(cfg)
        half_cfg.run_dir = str(tmp / "half")
        half_cfg.train.steps = 5
        half = run_training(half_cfg, manifest_path=paths["train"])

        resumed_cfg = copy.deepcopy(cfg)
        resumed_cfg.run_dir = str(tmp / "resumed")
        resumed = run_training(
            resumed_cfg, manifest_path=paths["train"], resume_from=half.checkpoint_path
        )
        full_tail = [row["total"] for row in full.history[5:]]
        resumed_tail = [row["total"] for row in resumed.history[5:]]
        assert full_tail == resumed_tail

    def test_lambda_ablation_leaves_ce_unoptimized(self, toy_dataset):
        cfg, paths, tmp = toy_dataset
        finals = {}
        for lam in (0.0, 5.0):
            run_cfg = copy.deepcopy(cfg)
            run_cfg.run_dir = str(tmp / f"lam_{lam}")
            run_cfg.loss.lam = lam
            run_cfg.train.steps = 150
            run_cfg.train.checkpoint_every = 150
            result = run_training(run_cfg, manifest_path=paths["train"])
            tail = result.history[-10:]
            finals[lam] = np.mean([row["ce_spk"] + row["ce_dir"] for row in tail])
        assert finals[0.0] > finals[5.0]

    def test_nan_loss_aborts_keeping_checkpoint(self, toy_dataset, monkeypatch):
        cfg, paths, tmp = toy_dataset
        run_cfg = copy.deepcopy(cfg)
        run_cfg.run_dir = str(tmp / "nan")
        run_cfg.train.steps = 20
        run_cfg.train.checkpoint_every = 2

        real_total_loss = training_mod.total_loss
        calls = {"n": 0}

        def poisoned(*args, **kwargs):
            calls["n"] += 1
            out = real_total_loss(*args, **kwargs)
            if calls["n"] > 6:
                return LossBreakdown(
                    sisnr_ss=float("nan"),
                    ce_spk=0.0,
                    ce_dir=0.0,
                    total=out.total * float("nan"),
                    lam=out.lam,
                )
            return out

        monkeypatch.setattr(training_mod, "total_loss", poisoned)
        with pytest.raises(TrainingAborted):
            run_training(run_cfg, manifest_path=paths["train"])
        ckpt = Path(run_cfg.run_dir) / "checkpoint.pt"
        assert ckpt.exists()
        _, _, payload = load_checkpoint(ckpt)
        assert payload["step"] <= 6
        assert all(np.isfinite(row["total"]) for row in payload["history"])

    def test_stop_check_early_exit(self, toy_dataset):
        cfg, paths, tmp = toy_dataset
        run_cfg = copy.deepcopy(cfg)
        run_cfg.run_dir = str(tmp / "early")
        run_cfg.train.steps = 100
        result = run_training(
            run_cfg, manifest_path=paths["train"], stop_check=lambda step, model: step >= 10
        )
        assert result.stopped_early
        assert result.final_step == 10


class TestEvalAndSeparate:
    def test_eval_report(self, toy_dataset):
        cfg, paths, tmp = toy_dataset
        run_cfg = copy.deepcopy(cfg)
        run_cfg.run_dir = str(tmp / "eval_run")
        run_cfg.train.steps = 4
        result = run_training(run_cfg, manifest_path=paths["train"])
        summary = cmd_eval(run_cfg, result.checkpoint_path, split="test", mode="greedy")
        assert summary["n_examples"] == 3
        assert 0.0 <= summary["count_accuracy"] <= 1.0
        out_dir = Path(run_cfg.run_dir) / "eval_test" / "greedy"
        records = [json.loads(line) for line in (out_dir / "per_example.jsonl").read_text().splitlines()]
        assert len(records) == 3
        assert (out_dir / "summary.csv").exists()
        assert (out_dir / "summary.png").exists()

    def test_eval_missing_files_raise(self, toy_dataset):
        cfg, paths, tmp = toy_dataset
        with pytest.raises(FileNotFoundError):
            cmd_eval(cfg, tmp / "nope.pt", split="test")

    def test_oracle_mode_fixes_counts(self, toy_dataset):
        cfg, paths, tmp = toy_dataset
        run_cfg = copy.deepcopy(cfg)
        run_cfg.run_dir = str(tmp / "oracle_run")
        run_cfg.train.steps = 4
        result = run_training(run_cfg, manifest_path=paths["train"])
        model, _, _ = load_checkpoint(result.checkpoint_path)
        examples = load_dataset(paths["dev"])
        records, summary = evaluate_dataset(model, examples, mode="oracle", compute_sdr=False)
        assert summary["count_accuracy"] == 1.0
        assert all(r.n_pred == r.n_true for r in records)

    def test_count_sources_batch_matches_eval(self, toy_dataset):
        cfg, paths, tmp = toy_dataset
        run_cfg = copy.deepcopy(cfg)
        run_cfg.run_dir = str(tmp / "count_run")
        run_cfg.train.steps = 2
        result = run_training(run_cfg, manifest_path=paths["train"])
        model, _, _ = load_checkpoint(result.checkpoint_path)
        examples = load_dataset(paths["dev"])
        counts = count_sources_batch(model, examples)
        records, _ = evaluate_dataset(model, examples, mode="greedy", compute_sdr=False)
        assert counts == [r.n_pred for r in records]

    def test_separate_writes_sources_and_sidecars(self, toy_dataset, tmp_path):
        cfg, paths, tmp = toy_dataset
        run_cfg = copy.deepcopy(cfg)
        run_cfg.run_dir = str(tmp / "sep_run")
        run_cfg.train.steps = 2
        result = run_training(run_cfg, manifest_path=paths["train"])

        # bias the decoders away from EOS so masks are produced
        model, _, payload = load_checkpoint(result.checkpoint_path)
        with torch.no_grad():
            for dec in (model.inference.spk_decoder, model.inference.dir_decoder):
                dec.w_state.weight.zero_()
                dec.w_context.weight.zero_()
        patched = Path(tmp_path) / "patched.pt"
        payload["model_state"] = model.state_dict()
        torch.save(payload, patched)

        mix_wav = sorted((Path(paths["test"]).parent / "audio").glob("*_mix.wav"))[0]
        out_dir = tmp_path / "sep_out"
        written = cmd_separate(patched, mix_wav, out_dir, beam_width=2)
        assert len(written) == model.cfg.max_decode_steps  # never-EOS surgery runs to the cap
        sidecars = sorted(out_dir.glob("source_*.json"))
        assert len(sidecars) == len(written)
        for path in sidecars:
            record = json.loads(path.read_text())
            assert 0 <= record["direction_token"] <= 36
            assert {"speaker_token", "direction_token", "log_score"} <= record.keys()

        rerun_dir = tmp_path / "sep_out2"
        cmd_separate(patched, mix_wav, rerun_dir, beam_width=2)
        for a, b in zip(sorted(out_dir.glob("*.wav")), sorted(rerun_dir.glob("*.wav"))):
            assert a.read_bytes() == b.read_bytes()

    def test_separate_rejects_mono(self, toy_dataset, tmp_path):
        cfg, paths, tmp = toy_dataset
        run_cfg = copy.deepcopy(cfg)
        run_cfg.run_dir = str(tmp / "mono_run")
        run_cfg.train.steps = 2
        result = run_training(run_cfg, manifest_path=paths["train"])
        mono = sorted((Path(paths["test"]).parent / "audio").glob("*_s0.wav"))[0]
        with pytest.raises(SystemExit, match="stereo"):
            cmd_separate(result.checkpoint_path, mono, tmp_path / "mono_out")
