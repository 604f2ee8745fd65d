"""Deterministic single-threaded simulation loop.

Events are processed in (tick, sequence) order; after each tick's deliveries
every node runs commit + finality evaluation and then tries to advance its
round. Identical scenarios produce identical event logs, ledgers and states.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .net import Network, ReplaySource
from .node import NodeRuntime
from .scenario import Scenario
from .speculation import ChainManager
from .types import derive_seed
from .workload import WorkloadPlanner


@dataclass
class RunArtifacts:
    scenario: Scenario
    params: object
    schedule: object
    net: Network
    nodes: list
    planner: WorkloadPlanner
    chain_mgr: ChainManager
    violations: list = field(default_factory=list)
    final_tick: int = 0

    @property
    def honest(self) -> list:
        return [nd for nd in self.nodes if not nd.crashed]

    def ledger_of_author(self, txid: str):
        """The finality record at the node that authored the transaction's block."""
        for nd in self.honest:
            loc = nd.engine.tx_location.get(txid)
            if loc is not None:
                return self.nodes[loc.author].engine.ledger.txs.get(txid)
        return None


class Simulation:
    def __init__(self, scenario: Scenario, replay: Optional[ReplaySource] = None):
        scenario.validate()
        self.scenario = scenario
        self.params = scenario.build_params()
        self.sched = scenario.build_schedule()
        self.net = Network(self.params, self.sched, replay=replay)
        from .leaders import LeaderSchedule
        self.leader_schedule = LeaderSchedule(self.params)
        wspec = scenario.workload_spec()
        self.planner = WorkloadPlanner(derive_seed(scenario.seed, "work"),
                                       self.params, wspec, crashed=self.sched.crashed)
        self.chain_mgr = ChainManager(wspec.chains, wspec.chain_mode, self.planner,
                                      self.params, derive_seed(scenario.seed, "chainseed"),
                                      scenario.speculation_failure_pct)
        self.nodes = [
            NodeRuntime(i, self.params, self.leader_schedule, self.net,
                        self.planner, scenario.mode, scenario.rounds)
            for i in range(self.params.n)
        ]
        self.violations: list = []

    def _honest(self):
        return [nd for nd in self.nodes if not nd.crashed]

    def _check_prefix_agreement(self):
        lists = [nd.record.committed for nd in self._honest()]
        base = max(lists, key=len)
        for lst in lists:
            if lst != base[: len(lst)]:
                self.violations.append(
                    ("committed-prefix-conflict", [str(b) for b in lst],
                     [str(b) for b in base]))

    def _post_deliveries(self, tick: int, delivered: list):
        for bid, dst in delivered:
            if bid.author == dst:
                self.chain_mgr.on_author_block(self.nodes[dst],
                                               self.net.broadcast_blocks[bid])
        for nd in self._honest():
            nd.post_step(tick)
            for txid, outcome, round, early in nd.poll_finalized():
                loc = nd.engine.tx_location.get(txid)
                if loc is not None and loc.author == nd.index:
                    self.chain_mgr.on_finality(nd, txid, outcome, round, early)
        self._check_prefix_agreement()

    def run(self) -> RunArtifacts:
        self.chain_mgr.start()
        tick = 0
        for nd in self.nodes:
            nd.try_advance(tick)
        while True:
            head = self.net.queue[0][0] if self.net.queue else None
            deadlines = [nd.advance_deadline for nd in self._honest()
                         if nd.advance_deadline is not None]
            dmin = min(deadlines) if deadlines else None
            if head is None and dmin is None:
                break
            if dmin is not None and (head is None or dmin < head):
                tick = dmin
                progressed = False
                for nd in self.nodes:
                    progressed |= nd.try_advance(tick)
                if not progressed:
                    for nd in self.nodes:
                        if nd.advance_deadline is not None and nd.advance_deadline <= tick:
                            nd.advance_deadline = None
                continue
            tick, batch = self.net.pop_tick()
            delivered = []
            for _, bid, dst in batch:
                self.nodes[dst].deliver(self.net.broadcast_blocks[bid])
                delivered.append((bid, dst))
            self._post_deliveries(tick, delivered)
            for nd in self.nodes:
                nd.try_advance(tick)
        self._teardown_checks()
        return RunArtifacts(self.scenario, self.params, self.leader_schedule,
                            self.net, self.nodes, self.planner, self.chain_mgr,
                            self.violations, final_tick=tick)

    def _teardown_checks(self):
        honest = self._honest()
        for bid in self.net.broadcast_blocks:
            for nd in honest:
                if bid not in nd.store:
                    self.violations.append(("totality", str(bid), nd.index))
        lists = [nd.record.committed for nd in honest]
        if any(lst != lists[0] for lst in lists):
            self.violations.append(("committed-list-divergence",
                                    [[str(b) for b in lst] for lst in lists]))
        states = [nd.exec_ledger.kv.snapshot_json() for nd in honest]
        if any(s != states[0] for s in states):
            self.violations.append(("state-divergence", [nd.index for nd in honest]))


def run_scenario(scenario: Scenario, replay: Optional[ReplaySource] = None) -> RunArtifacts:
    return Simulation(scenario, replay=replay).run()
