"""Command-line entry point: train, eval, replay and selftest subcommands.

Exit codes: 0 success, 1 validation failure, 2 runtime failure.
The default output root comes from $MARLNAV_OUT_ROOT (falling back to ./runs).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import ConfigError, dump_run_config, load_run_config
from .evaluate import evaluate, export_trajectories, load_policies, measure_latency
from .scenario import Experiment, read_records, write_records
from .selftest import run_selftest
from .train import train

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _out_root() -> Path:
    return Path(os.environ.get("MARLNAV_OUT_ROOT", "runs"))


def cmd_train(args) -> int:
    try:
        run = load_run_config(args.config)
        if args.seed is not None:
            run.seed = args.seed
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out_dir = Path(args.out or run.out_dir
                   or _out_root() / f"{run.experiment.value}_{run.mode.value}_seed{run.seed}")
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        dump_run_config(run, out_dir / "config.yaml")
        result = train(run, out_dir, log_every=1 if args.verbose else 0)
    except Exception as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"trained {result.total_steps} steps, {result.total_episodes} episodes")
    print(f"metrics: {result.metrics_path}")
    print(f"final checkpoints: {[str(p) for p in result.checkpoint_paths[-len(result.policies):]]}")
    return EXIT_OK


def cmd_eval(args) -> int:
    checkpoint = Path(args.checkpoint)
    if not checkpoint.exists():
        print(f"checkpoint not found: {checkpoint}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        experiment = Experiment(args.experiment)
    except ValueError:
        print(f"unknown experiment {args.experiment!r}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        policies, meta = load_policies(checkpoint, args.agents)
        report = evaluate(
            policies,
            experiment,
            n_episodes=args.episodes,
            seed=args.seed,
            n_agents=args.agents,
            deterministic=args.deterministic,
            normalize_obs=meta.get("normalize_obs", True),
        )
        out_dir = Path(args.out or _out_root() / f"eval_{experiment.value}_seed{args.seed}")
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "report.json", "w") as fh:
            json.dump(report.to_json(), fh, indent=2)
        write_records(report.records, out_dir / "records.ndjson")
        if report.records:
            export_trajectories(report.records, out_dir)
        if args.latency:
            mean_us, p99_us = measure_latency(policies[0], experiment=experiment,
                                              n_agents=args.agents)
            print(f"latency: mean {mean_us:.1f} us, p99 {p99_us:.1f} us")
    except Exception as exc:
        print(f"evaluation failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"average success rate: {report.average_success_rate:.1f}% "
          f"(per agent: {[f'{r:.1f}%' for r in report.per_agent_success_rate]})")
    print(f"report: {out_dir / 'report.json'}")
    return EXIT_OK


def cmd_replay(args) -> int:
    records_path = Path(args.records)
    if not records_path.exists():
        print(f"record file not found: {records_path}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        records = read_records(records_path)
    except (ValueError, KeyError) as exc:
        print(f"cannot parse records: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if not records:
        print("no episodes in record file", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        paths = export_trajectories(records, Path(args.out or "replay"))
    except Exception as exc:
        print(f"replay failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {paths['trajectories']} and {paths['velocities']}")
    return EXIT_OK


def cmd_selftest(_args) -> int:
    results = run_selftest()
    failed = False
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"[{status}] {res.name}: {res.detail}")
        failed |= not res.passed
    return EXIT_RUNTIME if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="marlnav",
        description="Decentralized multi-robot navigation: training and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a policy from a YAML config")
    p_train.add_argument("--config", required=True, help="run config file")
    p_train.add_argument("--seed", type=int, default=None, help="override config seed")
    p_train.add_argument("--out", default=None, help="output directory")
    p_train.add_argument("--verbose", action="store_true", help="log update stats")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a trained checkpoint")
    p_eval.add_argument("--checkpoint", required=True,
                        help="checkpoint file, or directory of per-agent checkpoints")
    p_eval.add_argument("--experiment", required=True,
                        choices=[e.value for e in Experiment])
    p_eval.add_argument("--episodes", type=int, default=500)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--agents", type=int, default=4)
    p_eval.add_argument("--deterministic", action="store_true",
                        help="act on the policy mean instead of sampling")
    p_eval.add_argument("--latency", action="store_true",
                        help="also measure observation-action latency")
    p_eval.add_argument("--out", default=None)
    p_eval.set_defaults(func=cmd_eval)

    p_replay = sub.add_parser("replay", help="regenerate plots from stored records")
    p_replay.add_argument("--records", required=True, help="NDJSON episode records")
    p_replay.add_argument("--out", default=None)
    p_replay.set_defaults(func=cmd_replay)

    p_self = sub.add_parser("selftest", help="run the property/oracle suite")
    p_self.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
