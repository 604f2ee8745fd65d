"""Command line interface: run, replay, fuzz, oracle."""

from __future__ import annotations

import argparse
import json
import os
import sys

from .fuzz import grid_scenarios, run_campaign
from .metrics import (
    collect_metrics,
    dump_finality,
    dump_leaders,
    dump_state,
    write_json,
)
from .net import ReplaySource
from .oracle import oracle_check
from .scenario import MODES, Scenario
from .sim import run_scenario


def _load_scenario(args) -> Scenario:
    if args.scenario:
        scenario = Scenario.load(args.scenario)
    else:
        scenario = Scenario()
    if args.seed is not None:
        scenario.seed = args.seed
    if args.mode is not None:
        scenario.mode = args.mode
    scenario.validate()
    return scenario


def _emit_dumps(args, artifacts, metrics, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "metrics.csv"), "w") as fh:
        fh.write(metrics.to_csv())
    write_json(os.path.join(out_dir, "metrics.json"), metrics.to_json())
    artifacts.scenario.save(os.path.join(out_dir, "scenario.json"))
    if args.dump_events:
        artifacts.net.dump_events(os.path.join(out_dir, "events.jsonl"))
    if args.dump_leaders:
        write_json(os.path.join(out_dir, "leaders.json"), dump_leaders(artifacts))
    if args.dump_state:
        write_json(os.path.join(out_dir, "state.json"), dump_state(artifacts))
    if args.dump_finality:
        write_json(os.path.join(out_dir, "finality.json"), dump_finality(artifacts))


def _run_and_report(args, replay=None) -> int:
    scenario = _load_scenario(args)
    artifacts = run_scenario(scenario, replay=replay)
    report = oracle_check(artifacts)
    metrics = collect_metrics(artifacts)
    metrics.oracle_verdict = report.verdict
    _emit_dumps(args, artifacts, metrics, args.out)
    write_json(os.path.join(args.out, "oracle.json"), report.to_json())
    summary = {
        "mode": metrics.mode, "seed": metrics.seed,
        "blocks": metrics.total_blocks, "committed": metrics.committed_blocks,
        "early_rate": metrics.early_rate.get("all"),
        "mean_latency": metrics.mean_latency.get("all"),
        "oracle": report.verdict,
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0 if report.verdict == "pass" else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dagfin",
        description="Deterministic DAG-BFT simulator with early finality")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", help="scenario JSON file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--mode", choices=MODES, default=None)
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--dump-leaders", action="store_true")
        p.add_argument("--dump-state", action="store_true")
        p.add_argument("--dump-finality", action="store_true")
        p.add_argument("--dump-events", action="store_true")

    p_run = sub.add_parser("run", help="run one scenario and check it")
    common(p_run)

    p_replay = sub.add_parser("replay", help="re-run from a recorded event log")
    common(p_replay)
    p_replay.add_argument("--replay", required=True, help="events.jsonl to replay")

    p_fuzz = sub.add_parser("fuzz", help="run a seeded campaign grid")
    p_fuzz.add_argument("--seeds", type=int, default=25, help="number of base seeds")
    p_fuzz.add_argument("--start-seed", type=int, default=0)
    p_fuzz.add_argument("--mode", choices=MODES, default="early")
    p_fuzz.add_argument("--rounds", type=int, default=24)
    p_fuzz.add_argument("--workers", type=int, default=0)
    p_fuzz.add_argument("--out", default="out")

    p_oracle = sub.add_parser("oracle", help="replay a run directory and re-verify")
    common(p_oracle)
    p_oracle.add_argument("--events", help="events.jsonl of the run to verify")

    args = parser.parse_args(argv)

    if args.command == "run":
        return _run_and_report(args)

    if args.command == "replay":
        return _run_and_report(args, replay=ReplaySource.from_file(args.replay))

    if args.command == "oracle":
        events = args.events or os.path.join(args.out, "events.jsonl")
        replay = ReplaySource.from_file(events)
        return _run_and_report(args, replay=replay)

    if args.command == "fuzz":
        seeds = range(args.start_seed, args.start_seed + args.seeds)
        scenarios = grid_scenarios(seeds, mode=args.mode, rounds=args.rounds)
        report = run_campaign(scenarios, workers=args.workers, out_dir=args.out)
        print(json.dumps({
            "runs": report.runs,
            "failures": len(report.failures),
            "persist_checks": report.persist_checks,
        }, indent=2))
        return 0 if report.ok else 1

    return 2


if __name__ == "__main__":
    sys.exit(main())
