"""Command-line interface: sdnet simulate|train|eval|separate."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import load_config


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="sdnet", description="Dual-channel speech separation")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate train/dev/test datasets")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--seed", type=int, default=None, help="override the data seed")

    p_train = sub.add_parser("train", help="train a model")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--checkpoint", default=None, help="resume from this checkpoint")
    p_train.add_argument("--seed", type=int, default=None, help="override the training seed")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a manifest split")
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--split", default="test", choices=["train", "dev", "test"])
    p_eval.add_argument("--mode", default="beam", choices=["beam", "greedy", "oracle"])
    p_eval.add_argument("--beam", type=int, default=None, help="beam width override")

    p_sep = sub.add_parser("separate", help="separate one stereo WAV file")
    p_sep.add_argument("--checkpoint", required=True)
    p_sep.add_argument("wav_in")
    p_sep.add_argument("out_dir")
    p_sep.add_argument("--beam", type=int, default=3)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s: %(message)s")

    if args.command == "simulate":
        from .simulate import cmd_simulate

        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.data.seed = args.seed
        paths = cmd_simulate(cfg)
        for split, path in paths.items():
            print(f"{split}: {path}")
        return 0

    if args.command == "train":
        from .training import cmd_train

        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.train.seed = args.seed
        result = cmd_train(cfg, resume_from=args.checkpoint)
        print(f"checkpoint: {result.checkpoint_path} (step {result.final_step})")
        return 0

    if args.command == "eval":
        from .evaluation import cmd_eval

        cfg = load_config(args.config)
        summary = cmd_eval(cfg, args.checkpoint, split=args.split, mode=args.mode, beam_width=args.beam)
        for key, value in summary.items():
            print(f"{key}: {value}")
        return 0

    if args.command == "separate":
        from .evaluation import cmd_separate

        written = cmd_separate(args.checkpoint, args.wav_in, args.out_dir, beam_width=args.beam)
        for path in written:
            print(path)
        return 0

    return 1


if __name__ == "__main__":
    sys.exit(main())
