"""Run metrics: per-transaction finality rounds, aggregates, CSV/JSON dumps."""

from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import dataclass, field

from .types import canonical_json


@dataclass
class TxRow:
    txid: str
    kind: str
    prod_round: int
    sto_round: object
    commit_round: object

    def resolved_round(self):
        if self.sto_round is not None:
            return self.sto_round
        return self.commit_round


@dataclass
class RunMetrics:
    mode: str
    seed: int
    rows: list = field(default_factory=list)
    early_rate: dict = field(default_factory=dict)    # per kind + overall
    mean_latency: dict = field(default_factory=dict)
    median_latency: dict = field(default_factory=dict)
    mean_commit_latency: float = 0.0
    sbo_blocks: int = 0
    committed_blocks: int = 0
    total_blocks: int = 0
    tie_events: int = 0
    oracle_verdict: str = "unchecked"
    violations: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "mode": self.mode, "seed": self.seed,
            "early_rate": self.early_rate,
            "mean_latency": self.mean_latency,
            "median_latency": self.median_latency,
            "mean_commit_latency": self.mean_commit_latency,
            "sbo_blocks": self.sbo_blocks,
            "committed_blocks": self.committed_blocks,
            "total_blocks": self.total_blocks,
            "tie_events": self.tie_events,
            "oracle_verdict": self.oracle_verdict,
            "violations": self.violations,
            "txs": [
                {"txid": r.txid, "kind": r.kind, "prod_round": r.prod_round,
                 "sto_round": r.sto_round, "commit_round": r.commit_round}
                for r in self.rows
            ],
        }

    def canonical(self) -> str:
        return canonical_json(self.to_json())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["txid", "type", "prod_round", "sto_round", "commit_round",
                    "mode", "seed"])
        for r in self.rows:
            w.writerow([r.txid, r.kind, r.prod_round,
                        "" if r.sto_round is None else r.sto_round,
                        "" if r.commit_round is None else r.commit_round,
                        self.mode, self.seed])
        return buf.getvalue()


def collect_metrics(artifacts) -> RunMetrics:
    """Per-transaction rounds as observed at each block author's own ledger."""
    m = RunMetrics(mode=artifacts.scenario.mode, seed=artifacts.scenario.seed)
    rows = []
    for bid, blk in sorted(artifacts.net.broadcast_blocks.items()):
        author_node = artifacts.nodes[bid.author]
        for tx in blk.txs:
            rec = author_node.engine.ledger.txs.get(tx.txid)
            rows.append(TxRow(
                txid=tx.txid, kind=tx.kind.value, prod_round=bid.round,
                sto_round=rec.sto_round if rec else None,
                commit_round=rec.commit_round if rec else None,
            ))
    m.rows = rows
    by_kind: dict[str, list] = {}
    for r in rows:
        if r.resolved_round() is None:
            continue  # still pending at run end
        by_kind.setdefault(r.kind, []).append(r)
        by_kind.setdefault("all", []).append(r)
    for kind, rs in sorted(by_kind.items()):
        m.early_rate[kind] = sum(1 for r in rs if r.sto_round is not None) / len(rs)
        lats = [r.resolved_round() - r.prod_round for r in rs]
        m.mean_latency[kind] = statistics.fmean(lats)
        m.median_latency[kind] = statistics.median(lats)
    commit_lats = [r.commit_round - r.prod_round for r in rows
                   if r.commit_round is not None]
    m.mean_commit_latency = statistics.fmean(commit_lats) if commit_lats else 0.0
    node0 = artifacts.honest[0]
    m.total_blocks = len(artifacts.net.broadcast_blocks)
    m.committed_blocks = len(node0.engine.committed_by)
    m.sbo_blocks = len(node0.engine.ledger.sbo_round)
    m.tie_events = node0.record.tie_events
    m.violations = [v[0] for v in artifacts.violations]
    return m


def dump_leaders(artifacts) -> dict:
    node0 = artifacts.honest[0]
    return {
        "committed": [
            {"author": b.author, "round": b.round, "kind": s.kind, "wave": s.wave}
            for b, s in zip(node0.record.committed, node0.record.committed_slots)
        ],
    }


def dump_state(artifacts) -> dict:
    return {str(nd.index): nd.exec_ledger.kv.snapshot_json()
            for nd in artifacts.honest}


def dump_finality(artifacts) -> dict:
    """Per-node finality ledgers: the oracle's input contract."""
    from .types import outcome_to_json
    out = {}
    for nd in artifacts.honest:
        txs = {}
        for txid, rec in sorted(nd.engine.ledger.txs.items()):
            txs[txid] = {
                "sto_round": rec.sto_round,
                "sto_outcome": outcome_to_json(rec.sto_outcome) if rec.sto_outcome else None,
                "commit_round": rec.commit_round,
                "final_outcome": outcome_to_json(rec.final_outcome) if rec.final_outcome else None,
            }
        out[str(nd.index)] = {
            "txs": txs,
            "sbo": {f"{b.author},{b.round}": r
                    for b, r in sorted(nd.engine.ledger.sbo_round.items())},
        }
    return out


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
