"""Deterministic key-value execution engine.

Executes sorted histories block by block, transactions in block order, with
two deviations from plain sequential replay:

* paired cross-shard sub-transactions execute atomically-adjacent at the
  position of the later ("prime") sub-transaction - both read the pre-pair
  state, then both write, so nothing interleaves the pair. A sub-transaction
  whose partner is not available yet is parked and executes when the partner
  arrives in a later committed history.
* a conditional transaction executes only if its predecessor's executed
  outcome matches the expectation attached to it; otherwise it is a no-op.
  Both decisions depend only on committed data, so every node reaches the
  same result.

Transaction programs are compiled to flat arrays and run through the
kernels module (numba or numpy fallback, identical results).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels
from .dag import BlockStore
from .ordering import SortedHistory, sorted_history
from .types import MASK64, Block, BlockId, Body, Outcome, Transaction, TxKind

_OPS = {Body.PUT: kernels.OP_PUT, Body.COPY: kernels.OP_COPY, Body.ADD: kernels.OP_ADD}


@dataclass
class KvState:
    """The shared store: (shard, key) -> unsigned 64-bit value."""

    store: dict = field(default_factory=dict)
    version: int = 0

    def get(self, key) -> int:
        return self.store.get(key, 0)

    def snapshot_json(self) -> dict:
        return {f"{k[0]}/{k[1]}": str(v & MASK64) for k, v in sorted(self.store.items())}


@dataclass
class ExecResult:
    outcomes: dict                  # txid -> Outcome, executed in this pass
    delta: dict                     # key -> value writes produced by the pass
    parked_added: list              # sub-transactions newly waiting on a partner
    executed_count: int = 0


def execute_blocks(blocks: list,
                   kv_get: Callable,
                   executed_get: Callable[[str], Optional[Outcome]],
                   parked: dict) -> ExecResult:
    """Execute a list of blocks in order against a read-only state view.

    ``parked`` maps txid -> Transaction for sub-transactions committed earlier
    whose partner had not arrived; it is mutated (pairs drained, new orphans
    added). Writes land in the returned delta, never in the underlying state.
    """
    entries = []           # Transaction per program row
    groups = []            # (start, length)
    local_wait: dict[str, int] = {}   # partner txid -> position reserved
    pos_of: dict[str, int] = {}
    parked_added = []

    in_this_pass = set()
    for blk in blocks:
        for tx in blk.txs:
            in_this_pass.add(tx.txid)

    def emit(txs):
        start = len(entries)
        for t in txs:
            pos_of[t.txid] = len(entries)
            entries.append(t)
        groups.append((start, len(txs)))

    for blk in blocks:
        for tx in blk.txs:
            if tx.kind == TxKind.PAIRED_SUB:
                p = tx.partner
                if p in parked:
                    emit([parked.pop(p), tx])
                elif p in local_wait:
                    emit([local_wait.pop(p), tx])
                elif p in in_this_pass:
                    local_wait[tx.txid] = tx  # defer to the partner's position
                else:
                    parked[tx.txid] = tx
                    parked_added.append(tx)
            else:
                emit([tx])

    # leftovers in local_wait mean the partner tx shares the pass but was
    # itself already consumed; structurally impossible with symmetric pairs
    assert not local_wait, f"unpaired deferrals: {list(local_wait)}"

    n = len(entries)
    keys: dict[tuple, int] = {}

    def key_idx(k):
        if k not in keys:
            keys[k] = len(keys)
        return keys[k]

    prog = kernels.empty_program()
    op = np.zeros(n, dtype=np.int64)
    read_idx = np.full(n, -1, dtype=np.int64)
    write_start = np.zeros(n, dtype=np.int64)
    write_len = np.zeros(n, dtype=np.int64)
    writes_idx: list[int] = []
    const = np.zeros(n, dtype=np.uint64)
    cond_mode = np.full(n, kernels.COND_NONE, dtype=np.int64)
    cond_val = np.zeros(n, dtype=np.uint64)

    for i, tx in enumerate(entries):
        op[i] = _OPS[tx.body]
        if tx.reads:
            read_idx[i] = key_idx(tx.reads[0])
        write_start[i] = len(writes_idx)
        for k in tx.writes:
            writes_idx.append(key_idx(k))
        write_len[i] = len(tx.writes)
        const[i] = tx.const & MASK64
        if tx.condition is not None:
            pred, expect = tx.condition
            if pred in pos_of and pos_of[pred] < i:
                cond_mode[i] = pos_of[pred]
                cond_val[i] = expect & MASK64
            else:
                prior = executed_get(pred)
                if prior is not None and not prior.aborted and \
                        prior.write_value() == (expect & MASK64):
                    cond_mode[i] = kernels.COND_PRE_MATCH
                else:
                    cond_mode[i] = kernels.COND_PRE_MISMATCH

    state = np.zeros(len(keys), dtype=np.uint64)
    for k, idx in keys.items():
        state[idx] = kv_get(k) & MASK64

    group_start = np.array([g[0] for g in groups], dtype=np.int64)
    group_len = np.array([g[1] for g in groups], dtype=np.int64)
    out_read, out_write, out_aborted = kernels.exec_groups(
        state, group_start, group_len, op, read_idx, write_start, write_len,
        np.array(writes_idx, dtype=np.int64) if writes_idx else prog["writes_idx"],
        const, cond_mode, cond_val)

    outcomes = {}
    executed_count = 0
    for i, tx in enumerate(entries):
        aborted = bool(out_aborted[i])
        reads_seen = tuple((k, int(out_read[i])) for k in tx.reads) if not aborted else ()
        writes = () if aborted else tuple((k, int(out_write[i])) for k in tx.writes)
        outcomes[tx.txid] = Outcome(tx.txid, reads_seen, writes, aborted)
        if not aborted:
            executed_count += 1

    delta = {}
    for k, idx in keys.items():
        val = int(state[idx])
        if val != (kv_get(k) & MASK64):
            delta[k] = val
    # a write may restore the pre-existing value; capture those too
    for i, tx in enumerate(entries):
        if not out_aborted[i]:
            for k in tx.writes:
                delta[k] = int(state[keys[k]])

    return ExecResult(outcomes=outcomes, delta=delta,
                      parked_added=parked_added, executed_count=executed_count)


class ExecLedger:
    """A node's finalized execution side: state, outcomes, parked orphans."""

    def __init__(self):
        self.kv = KvState()
        self.outcomes: dict[str, Outcome] = {}
        self.parked: dict[str, Transaction] = {}

    def apply(self, result: ExecResult):
        self.kv.store.update(result.delta)
        self.kv.version += result.executed_count
        self.outcomes.update(result.outcomes)

    def run_committed(self, blocks: list) -> ExecResult:
        """Execute a newly committed history and fold it into the ledger."""
        result = execute_blocks(blocks, self.kv.get, self.outcomes.get, self.parked)
        self.apply(result)
        return result

    def run_speculative(self, blocks: list,
                        parked_view: Optional[dict] = None) -> ExecResult:
        """Execute without touching the ledger (outcome evaluation)."""
        parked = dict(self.parked) if parked_view is None else parked_view
        return execute_blocks(blocks, self.kv.get, self.outcomes.get, parked)


def history_blocks(store: BlockStore, hist: SortedHistory) -> list:
    return [store.get(b) for b in hist.order]


def block_outcome(store: BlockStore, ledger: ExecLedger, root: BlockId,
                  is_committed, watermark: int = 0) -> dict:
    """Outcome of every transaction of root against root's own sorted history.

    The per-transaction values seen during the pass are exactly the
    transaction outcomes: the i-th transaction observes the history plus its
    block's first i-1 transactions.
    """
    hist = sorted_history(store, root, is_committed, watermark)
    result = ledger.run_speculative(history_blocks(store, hist))
    root_txids = {t.txid for t in store.get(root).txs}
    return {txid: o for txid, o in result.outcomes.items() if txid in root_txids}


def transaction_outcome(store: BlockStore, ledger: ExecLedger, root: BlockId,
                        index: int, is_committed, watermark: int = 0) -> Outcome:
    """Outcome of the index-th transaction of root (see block_outcome)."""
    tx = store.get(root).txs[index]
    return block_outcome(store, ledger, root, is_committed, watermark)[tx.txid]
