"""Commitment-based safety oracle.

Replays a finished run from its broadcast record with early finality
disabled: rebuilds the global DAG, re-derives the committed-leader sequence,
and recomputes every transaction's finalized outcome with a plain
dictionary interpreter (heap-driven Kahn ordering, no incremental caches, no
compiled kernels). Every recorded early award must equal the replayed
finalized outcome; honest nodes must agree on leader lists and final state.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

from .dag import BlockStore, wave_rounds
from .leaders import FALLBACK, STEADY, LeaderRecord, LeaderSchedule, VoteBook, try_commit
from .ordering import watermark_floor
from .types import MASK64, Body, Outcome, TxKind


@dataclass
class OracleReport:
    verdict: str = "pass"
    sto_mismatches: list = field(default_factory=list)
    divergences: list = field(default_factory=list)
    persist_checks: int = 0
    persist_violations: list = field(default_factory=list)
    wave_violations: list = field(default_factory=list)
    committed_leaders: int = 0

    def fail(self):
        self.verdict = "fail"

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict,
            "sto_mismatches": self.sto_mismatches,
            "divergences": self.divergences,
            "persist_checks": self.persist_checks,
            "persist_violations": self.persist_violations,
            "wave_violations": self.wave_violations,
            "committed_leaders": self.committed_leaders,
        }


def ref_sorted_history(store: BlockStore, root, committed: set, wm: int) -> list:
    """Reference ordering: Kahn's algorithm over the uncommitted sub-DAG.

    Ready vertices are drained smallest-(round, author)-first, which also
    realizes the deterministic tie-break; the result is ancestors before
    descendants, rounds ascending.
    """
    members = {b for b in store.ancestors(root)
               if b.round >= wm and b not in committed}
    order = []
    indeg = {}
    children = {}
    for b in members:
        blk = store.get(b)
        parents = [p for p in blk.parents if p in members]
        indeg[b] = len(parents)
        for p in parents:
            children.setdefault(p, []).append(b)
    ready = [(b.round, b.author, b) for b in members if indeg[b] == 0]
    heapq.heapify(ready)
    while ready:
        _, _, b = heapq.heappop(ready)
        order.append(b)
        for c in children.get(b, ()):
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(ready, (c.round, c.author, c))
    assert len(order) == len(members), "cycle in block pointers"
    return order


def ref_execute(blocks, kv: dict, outcomes: dict, parked: dict):
    """Reference executor: plain dict interpreter with pair/conditional rules."""
    local_wait = {}
    ids_here = {t.txid for b in blocks for t in b.txs}

    def run_group(txs):
        reads = {}
        for t in txs:
            reads[t.txid] = kv.get(t.reads[0], 0) if t.reads else 0
        results = {}
        for t in txs:
            aborted = False
            if t.condition is not None:
                pred, exp = t.condition
                po = outcomes.get(pred)
                if po is None or po.aborted or po.write_value() != (exp & MASK64):
                    aborted = True
            if aborted:
                results[t.txid] = Outcome(t.txid, (), (), True)
                continue
            rv = reads[t.txid]
            if t.body == Body.PUT:
                val = t.const & MASK64
            elif t.body == Body.COPY:
                val = rv
            else:
                val = (rv + t.const) & MASK64
            results[t.txid] = Outcome(
                t.txid, tuple((k, rv) for k in t.reads),
                tuple((k, val) for k in t.writes), False)
        for t in txs:
            o = results[t.txid]
            if not o.aborted:
                for k, v in o.writes_applied:
                    kv[k] = v
        outcomes.update(results)

    for blk in blocks:
        for tx in blk.txs:
            if tx.kind == TxKind.PAIRED_SUB:
                p = tx.partner
                if p in parked:
                    run_group([parked.pop(p), tx])
                elif p in local_wait:
                    run_group([local_wait.pop(p), tx])
                elif p in ids_here:
                    local_wait[tx.txid] = tx
                else:
                    parked[tx.txid] = tx
            else:
                run_group([tx])


def replay_reference(artifacts):
    """Rebuild the run from broadcast blocks; commit and execute from scratch."""
    params = artifacts.params
    gstore = BlockStore(params, owner=-1,
                        capacity_rounds=artifacts.scenario.rounds + 8)
    for bid in sorted(artifacts.net.broadcast_blocks, key=lambda b: (b.round, b.author)):
        gstore.insert(artifacts.net.broadcast_blocks[bid])
    schedule = LeaderSchedule(params)
    book = VoteBook(gstore, schedule)
    record = LeaderRecord()
    try_commit(gstore, schedule, book, record)
    committed: set = set()
    kv: dict = {}
    outcomes: dict = {}
    parked: dict = {}
    prev_round = 0
    for leader in record.committed:
        wm = max(0, watermark_floor(prev_round, params.v))
        order = ref_sorted_history(gstore, leader, committed, wm)
        ref_execute([gstore.get(b) for b in order], kv, outcomes, parked)
        committed.update(order)
        prev_round = leader.round
    return gstore, record, committed, kv, outcomes


def persist_bound_stats(artifacts, gstore: BlockStore, report: OracleReport):
    """Lower bound on per-round persistence when production was full."""
    params = artifacts.params
    bound = math.ceil((3 * params.f + 2) / 2)
    max_round = gstore.max_round
    for r in range(1, max_round):
        if len(gstore.round_blocks(r)) != params.n:
            continue
        if len(gstore.round_blocks(r + 1)) < params.quorum:
            continue
        persisting = sum(1 for b in gstore.round_blocks(r)
                         if gstore.persists(b, r + 1))
        report.persist_checks += 1
        if persisting < bound:
            report.persist_violations.append(
                {"round": r, "persisting": persisting, "bound": bound})
            report.fail()


def oracle_check(artifacts) -> OracleReport:
    """Diff every node's records against the from-scratch replay."""
    report = OracleReport()
    gstore, record, committed, ref_kv, ref_outcomes = replay_reference(artifacts)
    report.committed_leaders = len(record.committed)

    # leader-list agreement, against the replay and across nodes
    for nd in artifacts.honest:
        if nd.record.committed != record.committed:
            report.divergences.append(
                {"kind": "leader-list", "node": nd.index,
                 "node_list": [str(b) for b in nd.record.committed],
                 "replay_list": [str(b) for b in record.committed]})
            report.fail()

    # wave exclusivity on the first-round slot
    first_slot_kinds: dict[int, set] = {}
    for bid, slot in zip(record.committed, record.committed_slots):
        if slot.round == wave_rounds(slot.wave)[0]:
            first_slot_kinds.setdefault(slot.wave, set()).add(slot.kind)
    for wave, kinds in sorted(first_slot_kinds.items()):
        if STEADY in kinds and FALLBACK in kinds:
            report.wave_violations.append({"wave": wave})
            report.fail()

    # final state agreement
    ref_state = {f"{k[0]}/{k[1]}": str(v & MASK64) for k, v in sorted(ref_kv.items())}
    for nd in artifacts.honest:
        if nd.exec_ledger.kv.snapshot_json() != ref_state:
            report.divergences.append({"kind": "state", "node": nd.index})
            report.fail()

    # the core claim: every early award equals the finalized outcome
    for nd in artifacts.honest:
        for txid, rec in nd.engine.ledger.txs.items():
            if rec.sto_outcome is None:
                continue
            final = ref_outcomes.get(txid)
            if final is None:
                continue  # never committed within the run
            if rec.sto_outcome != final:
                report.sto_mismatches.append({
                    "node": nd.index, "txid": txid,
                    "sto": _brief(rec.sto_outcome), "final": _brief(final),
                })
                report.fail()

    # cross-node award consistency
    awards: dict[str, Outcome] = {}
    for nd in artifacts.honest:
        for txid, rec in nd.engine.ledger.txs.items():
            if rec.sto_outcome is None:
                continue
            if txid in awards and awards[txid] != rec.sto_outcome:
                report.divergences.append({"kind": "sto-cross-node", "txid": txid,
                                           "node": nd.index})
                report.fail()
            awards.setdefault(txid, rec.sto_outcome)

    for v in artifacts.violations:
        report.divergences.append({"kind": "run-invariant", "detail": str(v[0])})
        report.fail()

    persist_bound_stats(artifacts, gstore, report)
    return report


def _brief(o: Outcome) -> dict:
    return {"writes": [[f"{k[0]}/{k[1]}", str(v)] for k, v in o.writes_applied],
            "reads": [[f"{k[0]}/{k[1]}", str(v)] for k, v in o.reads_seen],
            "aborted": o.aborted}
