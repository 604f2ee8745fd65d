"""Seeded fuzz campaigns: a grid of scenarios, each run through the oracle.

Workers share nothing; each runs whole simulations in its own process and
reports (scenario, verdict, stats). Any failing scenario is persisted as a
JSON file so it can be replayed directly.
"""

from __future__ import annotations

import json
import multiprocessing as mp
import os
from dataclasses import dataclass, field

from .metrics import collect_metrics
from .oracle import oracle_check
from .scenario import Scenario
from .sim import run_scenario

POLICIES = (
    {"kind": "synchronous"},
    {"kind": "random_delay", "max_ticks": 3},
    {"kind": "random_delay", "max_ticks": 8},
    {"kind": "partition", "groups": None, "lift_tick": 12},  # groups filled per n
)

WORKLOADS = (
    {"alpha_pct": 100, "beta_pct": 0, "gamma_pct": 0, "txs_per_block": 3},
    {"alpha_pct": 60, "beta_pct": 40, "gamma_pct": 0, "txs_per_block": 3,
     "cross_shard_failure_pct": 33},
    {"alpha_pct": 50, "beta_pct": 30, "gamma_pct": 20, "txs_per_block": 4,
     "cross_shard_failure_pct": 33},
    {"alpha_pct": 100, "beta_pct": 0, "gamma_pct": 0, "txs_per_block": 2,
     "chains": [{"client": 0, "shard": 1, "length": 3}],
     "chain_mode": "pipelined"},
)


def _policy_for(policy: dict, n: int) -> dict:
    if policy["kind"] != "partition":
        return dict(policy)
    cut = 2 * ((n - 1) // 3) + 1
    return {"kind": "partition",
            "groups": [list(range(cut)), list(range(cut, n))],
            "lift_tick": policy["lift_tick"]}


def grid_scenarios(seeds, ns=(4, 7, 10), mode="early", rounds=24,
                   policies=POLICIES, workloads=WORKLOADS):
    """The default campaign grid: seeds x sizes x faults x policies x mixes."""
    out = []
    for seed in seeds:
        for n in ns:
            f = (n - 1) // 3
            for faults in sorted({0, 1, f}):
                if faults > f:
                    continue
                for pi, policy in enumerate(policies):
                    for wi, workload in enumerate(workloads):
                        out.append(Scenario(
                            n=n, rounds=rounds, mode=mode,
                            seed=seed * 1_000_003 + n * 101 + faults * 17 + pi * 5 + wi,
                            faults=faults, policy=_policy_for(policy, n),
                            workload=dict(workload),
                        ))
    return out


@dataclass
class CampaignReport:
    runs: int = 0
    failures: list = field(default_factory=list)   # (scenario json, report json)
    persist_checks: int = 0
    early_rates: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures


def _run_one(scenario_json: dict):
    scenario = Scenario.from_json(scenario_json)
    artifacts = run_scenario(scenario)
    report = oracle_check(artifacts)
    metrics = collect_metrics(artifacts)
    return {
        "scenario": scenario_json,
        "verdict": report.verdict,
        "report": report.to_json(),
        "persist_checks": report.persist_checks,
        "early_rate": metrics.early_rate,
    }


def run_campaign(scenarios, workers: int = 0, out_dir=None) -> CampaignReport:
    """Execute a list of scenarios, optionally in parallel worker processes."""
    report = CampaignReport()
    payloads = [s.to_json() for s in scenarios]
    if workers and len(payloads) > 1:
        ctx = mp.get_context("spawn")
        with ctx.Pool(workers) as pool:
            results = pool.map(_run_one, payloads, chunksize=4)
    else:
        results = [_run_one(p) for p in payloads]
    for res in results:
        report.runs += 1
        report.persist_checks += res["persist_checks"]
        for kind, rate in res["early_rate"].items():
            report.early_rates.setdefault(kind, []).append(rate)
        if res["verdict"] != "pass":
            report.failures.append((res["scenario"], res["report"]))
            if out_dir:
                os.makedirs(out_dir, exist_ok=True)
                idx = len(report.failures)
                path = os.path.join(out_dir, f"failure_{idx:03d}.json")
                with open(path, "w") as fh:
                    json.dump(res, fh, indent=2, sort_keys=True)
    return report
