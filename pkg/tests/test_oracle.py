"""The safety oracle itself: sensitivity, agreement checks, persist bound."""

import dataclasses

from dagfin.oracle import oracle_check, ref_sorted_history, replay_reference
from dagfin.scenario import Scenario
from dagfin.sim import run_scenario
from dagfin.types import Outcome

MIXED = {"alpha_pct": 50, "beta_pct": 30, "gamma_pct": 20, "txs_per_block": 3,
         "cross_shard_failure_pct": 33}


def test_clean_run_passes():
    art = run_scenario(Scenario(n=4, rounds=16, seed=1, workload=MIXED))
    report = oracle_check(art)
    assert report.verdict == "pass"
    assert report.committed_leaders >= 3
    assert report.persist_checks > 0 and not report.persist_violations


def test_corrupted_award_yields_exactly_one_mismatch():
    art = run_scenario(Scenario(n=4, rounds=16, seed=2, workload=MIXED))
    node0 = art.honest[0]
    txid, rec = next((t, r) for t, r in sorted(node0.engine.ledger.txs.items())
                     if r.sto_outcome is not None and r.final_outcome is not None)
    wrong = dataclasses.replace(
        rec.sto_outcome,
        writes_applied=tuple((k, v + 1) for k, v in rec.sto_outcome.writes_applied))
    rec.sto_outcome = wrong
    report = oracle_check(art)
    assert report.verdict == "fail"
    assert len(report.sto_mismatches) == 1
    assert report.sto_mismatches[0]["txid"] == txid


def test_naive_mode_fails_under_adversarial_delivery():
    failures = 0
    for seed in range(5):
        art = run_scenario(Scenario(
            n=4, rounds=16, seed=seed, mode="naive", faults=1,
            policy={"kind": "random_delay", "max_ticks": 6}, workload=MIXED))
        if oracle_check(art).verdict != "pass":
            failures += 1
    assert failures > 0


def test_reference_order_is_topological():
    art = run_scenario(Scenario(n=4, rounds=12, seed=3, workload=MIXED))
    gstore, record, committed, _, _ = replay_reference(art)
    done = set()
    prev_round = 0
    for leader in record.committed:
        order = ref_sorted_history(gstore, leader, done, 0)
        pos = {b: i for i, b in enumerate(order)}
        for b in order:
            for q in gstore.get(b).parents:
                if q in pos:
                    assert pos[q] < pos[b]
        done.update(order)


def test_wave_exclusivity_checked():
    art = run_scenario(Scenario(n=4, rounds=20, seed=4, faults=1, workload=MIXED))
    report = oracle_check(art)
    assert report.wave_violations == []
