"""Pipelined dependent client transactions.

A client with a chain of dependent transactions normally waits out one full
finality cycle per element. With pipelining, the node that accepted element m
hands back a speculative outcome as soon as the element enters a block; the
client immediately submits element m+1 conditioned on that outcome. If the
finalized outcome later disagrees, the conditional element (and everything
after it) aborts as a no-op and the client resubmits from the failure point.
Abort is an execution-time decision taken from committed data only, so every
node resolves chains identically.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional

from .types import Body, ConfigError, MASK64, Transaction, TxKind, derive_seed
from .workload import CHAIN_KEY_BASE, WorkloadPlanner

PIPELINED = "pipelined"
SEQUENTIAL = "sequential"

PENDING = "pending"
SENT = "speculatively_sent"
CONFIRMED = "confirmed"
ABORTED = "aborted"


@dataclass
class ChainElement:
    position: int
    txid: str
    status: str = PENDING
    speculated: Optional[int] = None    # value promised to the client
    expected_by_next: Optional[int] = None
    final_value: Optional[int] = None
    finality_round: Optional[int] = None


@dataclass
class TxChain:
    client: int
    length: int
    shard: int
    key: tuple
    deltas: list
    start_round: int = 1
    elements: list = field(default_factory=list)   # active instance per position
    history: list = field(default_factory=list)    # every instance ever sent
    completion_round: Optional[int] = None

    def active(self, position: int) -> Optional[ChainElement]:
        if position < len(self.elements):
            return self.elements[position]
        return None


class ChainManager:
    """Drives chain submission, speculation, and abort/resubmit resolution."""

    def __init__(self, chain_cfgs: list, mode: str, planner: WorkloadPlanner,
                 params, seed: int, speculation_failure_pct: int = 0):
        self.mode = mode
        self.planner = planner
        self.params = params
        self.seed = seed
        self.failure_pct = speculation_failure_pct
        self.chains: list[TxChain] = []
        self.by_txid: dict[str, tuple] = {}
        for i, cfg in enumerate(chain_cfgs):
            shard = cfg["shard"]
            if not (0 <= shard < params.n):
                raise ConfigError(f"chain {i}: shard out of range")
            length = cfg["length"]
            if length < 1:
                raise ConfigError(f"chain {i}: length must be >= 1")
            if cfg.get("kind", "local") != "local":
                # conditions on pair halves have no defined speculation semantics
                raise ConfigError(f"chain {i}: only local-transaction chains are supported")
            rng = random.Random(derive_seed(seed, "chain", i))
            chain = TxChain(
                client=cfg.get("client", i), length=length, shard=shard,
                key=(shard, CHAIN_KEY_BASE + cfg.get("client", i)),
                deltas=[rng.getrandbits(16) + 1 for _ in range(length)],
                start_round=cfg.get("start_round", 1),
            )
            self.chains.append(chain)

    def start(self):
        for ci, chain in enumerate(self.chains):
            self._submit(ci, 0, chain.start_round, condition=None)

    # ------------------------------------------------------------ submission

    def _submit(self, ci: int, position: int, earliest_round: int, condition):
        chain = self.chains[ci]
        attempt = sum(1 for e in chain.history if e.position == position)
        txid = f"c{ci}p{position}a{attempt}"
        tx = Transaction(
            txid=txid, kind=TxKind.LOCAL, reads=(chain.key,), writes=(chain.key,),
            body=Body.ADD, const=chain.deltas[position], condition=condition,
        )
        el = ChainElement(position=position, txid=txid, status=SENT)
        if position < len(chain.elements):
            chain.elements[position] = el
        else:
            chain.elements.append(el)
        chain.history.append(el)
        self.by_txid[txid] = (ci, position, el)
        self.planner.queue(chain.shard, earliest_round, tx)

    # ----------------------------------------------------------- speculation

    def on_author_block(self, node, blk):
        """Speculate on chain elements the node just packed into its own block."""
        if self.mode != PIPELINED:
            return
        for tx in blk.txs:
            hit = self.by_txid.get(tx.txid)
            if hit is None:
                continue
            ci, position, el = hit
            chain = self.chains[ci]
            if el is not chain.active(position) or position + 1 >= chain.length:
                continue
            nxt = chain.active(position + 1)
            if nxt is not None and nxt.status != ABORTED:
                continue  # successor already in flight
            value = self.speculate_outcome(node, blk, tx)
            rng = random.Random(derive_seed(self.seed, "spec", tx.txid))
            if rng.randrange(100) < self.failure_pct:
                value = (value + 1) & MASK64
            el.speculated = value
            el.expected_by_next = value
            self._submit(ci, position + 1, blk.id.round + 1,
                         condition=(tx.txid, value))

    @staticmethod
    def speculate_outcome(node, blk, tx) -> int:
        """The node's best current estimate of the transaction's outcome."""
        outcomes = node.engine._history_outcomes((blk.id,))
        o = outcomes.get(tx.txid)
        if o is None or o.write_value() is None:
            return 0
        return o.write_value()

    # ------------------------------------------------------------ resolution

    def on_finality(self, node, txid: str, outcome, round: int, early: bool):
        """React to a chain element's outcome becoming known at its author node."""
        hit = self.by_txid.get(txid)
        if hit is None:
            return
        ci, position, el = hit
        chain = self.chains[ci]
        if el is not chain.active(position):
            return
        if el.finality_round is not None:
            return  # commit following an award; already resolved
        el.final_value = outcome.write_value()
        el.finality_round = round
        if outcome.aborted:
            el.status = ABORTED
            return  # a fresh instance was queued when the mismatch was detected
        el.status = CONFIRMED
        if position + 1 == chain.length:
            if chain.completion_round is None:
                chain.completion_round = round
            return
        nxt = chain.active(position + 1)
        if self.mode == SEQUENTIAL or nxt is None or nxt.status == ABORTED:
            self._submit(ci, position + 1, round + 1, condition=None)
        elif el.expected_by_next is not None and el.expected_by_next != el.final_value:
            # mismatch: everything downstream will abort as no-ops; restart
            for p in range(position + 1, len(chain.elements)):
                chain.elements[p].status = ABORTED
            self._submit(ci, position + 1, round + 1, condition=None)

    def resolve_chain(self, node, txid: str, outcome, round: int, early: bool):
        self.on_finality(node, txid, outcome, round, early)

    # --------------------------------------------------------------- reports

    def summary(self) -> list:
        out = []
        for ci, chain in enumerate(self.chains):
            out.append({
                "chain": ci,
                "length": chain.length,
                "key": f"{chain.key[0]}/{chain.key[1]}",
                "completion_round": chain.completion_round,
                "instances": len(chain.history),
                "aborted": sum(1 for e in chain.history if e.status == ABORTED),
                "statuses": [e.status for e in chain.elements],
            })
        return out

    def expected_final_value(self, ci: int) -> int:
        return sum(self.chains[ci].deltas) & MASK64
