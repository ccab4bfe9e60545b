#!/usr/bin/env python3
"""Desk-scale end-to-end experiment.

Generates a synthetic dataset, trains value-network agents for several
episode-length scenarios, evaluates them against the rule-based baselines
with 9-step interactions, and prints the per-step report table (action
preference, Dice mean +- std, misunderstanding counts).

Usage:
    python scripts/run_desk_experiment.py --workdir /tmp/desk --quick
"""
from __future__ import annotations

import argparse
import functools
import time
from pathlib import Path

from tepo.agent import TrainConfig, train
from tepo.policies import (
    AlternatingPolicy,
    CheckpointPolicy,
    EvalReport,
    GreedyOraclePolicy,
    RandomPolicy,
    evaluate,
)
from tepo.segmenter import MockConfig, MockSegmenter
from tepo.synthdata import SynthConfig, generate_dataset, split_dataset, write_dataset
from tepo.tinynet import load_net


def print_report(report: EvalReport) -> None:
    print(f"\n== {report.policy}  (mean final Dice {report.mean_final_dice:.4f}, "
          f"step-1 reference {report.one_step_reference:.4f})")
    print("step | top action       | dice mean+-std    | <-0.1")
    names = ("Fore", "Back", "Center", "Bbox")
    for row in report.step_rows():
        top = max(range(4), key=lambda i: row.action_pct[i])
        print(f"  {row.step}  | {names[top]:6s} ({row.action_pct[top]:6.2f}%) "
              f"| {row.dice_mean:.4f} +- {row.dice_std:.4f} | {row.misunderstandings}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", default="desk_runs")
    ap.add_argument("--cases", type=int, default=700)
    ap.add_argument("--train-cases", type=int, default=500)
    ap.add_argument("--episode-lens", type=int, nargs="+", default=[2, 9])
    ap.add_argument("--steps", type=int, default=60_000,
                    help="approximate total env steps per training run")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--quick", action="store_true",
                    help="tiny run for a smoke check (~2 min)")
    args = ap.parse_args()

    workdir = Path(args.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    total_steps = 6_000 if args.quick else args.steps

    synth = SynthConfig(master_seed=args.seed)
    cases = generate_dataset(synth, args.cases)
    parts = split_dataset(cases)
    train_cases = parts["train"][: args.train_cases]
    test_cases = parts["test"]
    write_dataset(workdir / "dataset", cases, generator=synth)
    print(f"dataset: {len(cases)} cases -> train {len(train_cases)}, "
          f"val {len(parts['val'])}, test {len(test_cases)}")

    try:
        from threadpoolctl import threadpool_limits
        limits = threadpool_limits(limits=1)  # small matrices: threads just burn cycles
    except ImportError:
        import contextlib
        limits = contextlib.nullcontext()

    factory = functools.partial(MockSegmenter, MockConfig())
    reports = []
    with limits:
        for episode_len in args.episode_lens:
            episodes = max(1, round(total_steps / episode_len))
            cfg = TrainConfig(episodes=episodes, episode_len=episode_len,
                              replay_capacity=12_000, seed=args.seed)
            ckpt = workdir / f"agent-{episode_len}step.tepo"
            t0 = time.perf_counter()
            train(train_cases, cfg, MockSegmenter(), checkpoint_path=ckpt,
                  log_path=workdir / f"agent-{episode_len}step.log.csv")
            print(f"trained {episode_len}-step agent in {time.perf_counter() - t0:.0f}s "
                  f"-> {ckpt}")
            policy = CheckpointPolicy(load_net(ckpt), name=f"trained-{episode_len}step")
            reports.append(evaluate(policy, test_cases, factory, steps=9, seed=0, jobs=2))

    for baseline in (RandomPolicy(), AlternatingPolicy(), GreedyOraclePolicy()):
        reports.append(evaluate(baseline, test_cases, factory, steps=9, seed=0, jobs=2))

    for report in reports:
        print_report(report)

    final = {r.policy: r.mean_final_dice for r in reports}
    print("\nmean final Dice:", {k: round(v, 4) for k, v in final.items()})


if __name__ == "__main__":
    main()
