"""Pipelined dependent transactions: speculation, aborts, equivalence."""

import pytest

from dagfin.oracle import oracle_check
from dagfin.scenario import Scenario
from dagfin.sim import run_scenario
from dagfin.speculation import ABORTED, CONFIRMED
from dagfin.types import ConfigError

WORKLOAD = {"alpha_pct": 100, "beta_pct": 0, "gamma_pct": 0, "txs_per_block": 2}


def chain_scenario(mode, length=3, seed=11, failure_pct=0, rounds=26):
    return Scenario(
        n=4, rounds=rounds, seed=seed, speculation_failure_pct=failure_pct,
        workload={**WORKLOAD,
                  "chains": [{"client": 0, "shard": 1, "length": length}],
                  "chain_mode": mode},
    )


class TestPipelining:
    def test_correct_speculation_confirms_whole_chain(self):
        art = run_scenario(chain_scenario("pipelined"))
        chain = art.chain_mgr.chains[0]
        assert [e.status for e in chain.elements] == [CONFIRMED] * 3
        assert chain.completion_round is not None
        assert oracle_check(art).verdict == "pass"

    def test_single_element_chain_trivially_confirms(self):
        art = run_scenario(chain_scenario("pipelined", length=1))
        chain = art.chain_mgr.chains[0]
        assert [e.status for e in chain.elements] == [CONFIRMED]

    def test_pipelined_beats_sequential(self):
        fast = run_scenario(chain_scenario("pipelined")).chain_mgr.chains[0]
        slow = run_scenario(chain_scenario("sequential")).chain_mgr.chains[0]
        assert fast.completion_round < slow.completion_round

    def test_mis_speculation_aborts_and_resubmits(self):
        art = run_scenario(chain_scenario("pipelined", failure_pct=100, rounds=32))
        chain = art.chain_mgr.chains[0]
        assert any(e.status == ABORTED for e in chain.history)
        assert [e.status for e in chain.elements] == [CONFIRMED] * 3
        # every element applied exactly once despite the retries
        node0 = art.honest[0]
        assert node0.exec_ledger.kv.get(chain.key) == sum(chain.deltas)
        assert oracle_check(art).verdict == "pass"

    def test_aborted_instances_are_noops_in_state(self):
        art = run_scenario(chain_scenario("pipelined", failure_pct=100, rounds=32))
        aborted = [e.txid for c in art.chain_mgr.chains for e in c.history
                   if e.status == ABORTED]
        assert aborted
        node0 = art.honest[0]
        for txid in aborted:
            out = node0.exec_ledger.outcomes.get(txid)
            if out is not None:
                assert out.aborted and out.writes_applied == ()


class TestEquivalence:
    def test_chains_leave_rest_of_state_untouched(self):
        with_chains = run_scenario(chain_scenario("pipelined", seed=13))
        without = run_scenario(Scenario(n=4, rounds=26, seed=13, workload=WORKLOAD))
        chain_keys = {c.key for c in with_chains.chain_mgr.chains}
        state_a = {k: v for k, v in with_chains.honest[0].exec_ledger.kv.store.items()
                   if k not in chain_keys}
        state_b = dict(without.honest[0].exec_ledger.kv.store)
        assert state_a == state_b

    def test_completion_never_later_than_sequential(self):
        for seed in range(4):
            for fail in (0, 50):
                fast = run_scenario(
                    chain_scenario("pipelined", seed=seed, failure_pct=fail,
                                   rounds=30)).chain_mgr.chains[0]
                slow = run_scenario(
                    chain_scenario("sequential", seed=seed, rounds=30)
                ).chain_mgr.chains[0]
                assert fast.completion_round is not None
                assert slow.completion_round is not None
                assert fast.completion_round <= slow.completion_round


class TestValidation:
    def test_non_local_chain_rejected(self):
        sc = Scenario(n=4, rounds=12, workload={
            **WORKLOAD, "chains": [{"client": 0, "shard": 1, "length": 2,
                                    "kind": "paired"}]})
        with pytest.raises(ConfigError):
            run_scenario(sc)
