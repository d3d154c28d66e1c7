"""Command-line entry point: train / eval / baseline campaigns."""

from __future__ import annotations

import argparse
import sys

from .config import Config, load_config, paired_prealloc
from .harness import run_campaign


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", help="YAML config file (defaults baked in otherwise)")
    sp.add_argument("--seed", type=int, help="master seed")
    sp.add_argument("--epochs", type=int,
                    help="training epochs (train) or evaluation epochs (eval/baseline)")
    sp.add_argument("--objective", choices=["s1", "s2"], help="fairness formulation")
    sp.add_argument("--combiner", choices=["mr", "zf"])
    sp.add_argument("--alpha", type=float, help="fairness inverse temperature")
    sp.add_argument("--frame-len", type=int, help="frame/episode length in slots")
    sp.add_argument("--lyapunov-v", type=float, help="drift-penalty trade-off factor")
    sp.add_argument("--z-max", type=float, help="virtual-queue service quantum")
    sp.add_argument("--feedback", action=argparse.BooleanOptionalAction, default=None,
                    help="include per-pilot ternary feedback in observations")
    sp.add_argument("--prealloc", choices=["none", "paired"],
                    help="pilot pre-allocation pattern override")
    sp.add_argument("--trials", type=int, help="independent repetitions")
    sp.add_argument("--event-log", action="store_true", default=None,
                    help="emit a per-slot event log")
    sp.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gfra", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, descr in (("train", "train the distributed access policy"),
                        ("eval", "evaluate a trained checkpoint"),
                        ("baseline", "run one of the baseline schemes")):
        sp = sub.add_parser(name, help=descr)
        _add_common(sp)
        if name == "eval":
            sp.add_argument("--checkpoint", required=True)
        if name == "baseline":
            sp.add_argument("--mode", choices=["baseline1", "baseline2", "baseline3"],
                            default="baseline1")
    return parser


def apply_overrides(cfg: Config, args: argparse.Namespace) -> Config:
    cfg.run.mode = args.mode if args.command == "baseline" else args.command
    if args.seed is not None:
        cfg.run.seed = args.seed
    if args.out is not None:
        cfg.run.out_dir = args.out
    if args.trials is not None:
        cfg.run.trials = args.trials
    if args.event_log:
        cfg.run.event_log = True
    if args.epochs is not None:
        if args.command == "train":
            cfg.training.epochs = args.epochs
        else:
            cfg.training.eval_epochs = args.epochs
    if args.objective is not None:
        cfg.fairness.objective = args.objective
    if args.alpha is not None:
        cfg.fairness.alpha = args.alpha
    if args.frame_len is not None:
        cfg.fairness.frame_len = args.frame_len
    if args.lyapunov_v is not None:
        cfg.fairness.lyapunov_v = args.lyapunov_v
    if args.z_max is not None:
        cfg.fairness.z_max = args.z_max
    if args.combiner is not None:
        cfg.system.combiner = args.combiner
    if args.feedback is not None:
        cfg.policy.feedback = args.feedback
    if args.prealloc == "none":
        cfg.policy.prealloc = None
    elif args.prealloc == "paired":
        cfg.policy.prealloc = paired_prealloc(cfg.system.n_users, cfg.system.n_pilots)
    if getattr(args, "checkpoint", None) is not None:
        cfg.run.checkpoint = args.checkpoint
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else Config()
        apply_overrides(cfg, args).validate()
        summary = run_campaign(cfg)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"done: mode={summary['mode']} epochs={summary['epochs']} "
          f"mean_max_ncpdr={summary['mean_max_ncpdr']:.4f} "
          f"mean_sum_throughput={summary['mean_sum_throughput']:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
