"""Command-line entry points: dataset building, pretraining, DQN training,
experiment sweeps, and report generation."""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import dqn, harness, metrics, net, report
from .affordance import build_pretrain_dataset, load_dataset, save_dataset
from .pretrain import PretrainConfig, history_to_csv, pretrain_model


def _cmd_dataset(args) -> int:
    samples = build_pretrain_dataset(args.samples, args.objects,
                                     (args.size, args.size), args.noise_frac, args.seed)
    save_dataset(samples, args.out)
    print(f"wrote {len(samples)} samples to {args.out}")
    return 0


def _cmd_pretrain(args) -> int:
    dataset = load_dataset(args.dataset)
    cfg = PretrainConfig(epochs=args.epochs, lr=args.lr, loss_kind=args.loss, seed=args.seed)
    params, history = pretrain_model(dataset, cfg)
    net.save_params(params, args.out)
    history_to_csv(history, os.path.splitext(args.out)[0] + ".loss.csv")
    print(f"pretrained on {len(dataset)} samples ({cfg.loss_kind}); "
          f"final loss {history[-1].loss:.5f}; saved to {args.out}")
    return 0


def _cmd_train(args) -> int:
    if args.warm_start and args.scratch:
        print("choose either --warm-start or --scratch", file=sys.stderr)
        return 2
    env_cfg = dqn.EnvConfig(n_objects=args.objects, workspace=(args.size, args.size))
    train_cfg = dqn.TrainConfig(total_steps=args.steps, warm_start=args.warm_start,
                                seed=args.seed, lr=args.lr)
    result = dqn.run_training(env_cfg, train_cfg)
    dqn.save_run(result, args.out)
    outcomes = [r.reward for r in result.curve]
    m = metrics.analyze_curve(outcomes)
    metrics.write_metrics(m, os.path.join(args.out, "metrics.json"))
    print(f"trained {args.steps} steps; final G {m['G_final']:.3f}; run saved to {args.out}")
    return 0


def _cmd_experiment(args) -> int:
    plan = harness.ExperimentPlan.from_json(args.plan) if args.plan else harness.ExperimentPlan()
    statuses = harness.run_experiment(plan, args.out)
    failed = {k: v for k, v in statuses.items() if v != "ok"}
    for name, status in statuses.items():
        print(f"{name}: {status}")
    return 1 if failed else 0


def _cmd_report(args) -> int:
    paths = report.emit_report(args.results)
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="coarsegrasp")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dataset", help="build a key-point-labeled pretraining dataset")
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--objects", type=int, default=4)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--noise-frac", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_dataset)

    p = sub.add_parser("pretrain", help="train the affordance model on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--loss", choices=["kl", "mse", "smooth_l1"], default="kl")
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_pretrain)

    p = sub.add_parser("train", help="run DQN grasp learning")
    p.add_argument("--warm-start", default=None, help="pretrained checkpoint path")
    p.add_argument("--scratch", action="store_true", help="random initialization")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--objects", type=int, default=4)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--lr", type=float, default=dqn.TrainConfig.lr)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("experiment", help="run a full experiment plan")
    p.add_argument("--plan", default=None, help="plan JSON; defaults to the desk-scale plan")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("report", help="summarize a results directory")
    p.add_argument("--in", dest="results", required=True)
    p.set_defaults(func=_cmd_report)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
