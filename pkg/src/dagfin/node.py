"""Per-node protocol runtime: view maintenance, advancing, commit, finality."""

from __future__ import annotations

from typing import Optional

from .dag import BlockStore, is_steady_round, shard_in_charge
from .execution import ExecLedger, history_blocks
from .finality import MODE_BASELINE, FinalityEngine
from .leaders import LeaderRecord, LeaderSchedule, VoteBook, try_commit
from .net import DEFINITELY_MISSING, Network
from .ordering import sorted_history, watermark_floor
from .types import Block, BlockId, ProtocolParams


class NodeRuntime:
    """One simulated node: a DAG view plus consensus and finality state."""

    def __init__(self, index: int, params: ProtocolParams, schedule: LeaderSchedule,
                 net: Network, planner, mode: str, round_budget: int):
        self.index = index
        self.params = params
        self.schedule = schedule
        self.net = net
        self.planner = planner
        self.mode = mode
        self.round_budget = round_budget
        self.crashed = index in net.sched.crashed
        self.store = BlockStore(params, owner=index, capacity_rounds=round_budget + 8)
        self.book = VoteBook(self.store, schedule)
        self.record = LeaderRecord()
        self.exec_ledger = ExecLedger()
        self.engine = FinalityEngine(index, params, self.store, schedule,
                                     self.book, self.record, self.exec_ledger,
                                     net, mode)
        self.current_round = 0
        self.advance_deadline: Optional[int] = None
        self._parent_buffer: dict[BlockId, Block] = {}
        self.newly_final: list = []   # (txid, outcome, round, early) since last poll
        self._award_cursor = 0

    # ------------------------------------------------------------- delivery

    def deliver(self, block: Block):
        """Buffer a delivered block; insert once all parents are present."""
        if block.id in self.store:
            return
        self._parent_buffer[block.id] = block
        progress = True
        while progress:
            progress = False
            for bid in sorted(self._parent_buffer):
                blk = self._parent_buffer[bid]
                if all(p in self.store for p in blk.parents):
                    self.store.insert(blk)
                    self.engine.on_block(blk)
                    del self._parent_buffer[bid]
                    progress = True

    # ------------------------------------------------------------ consensus

    def post_step(self, tick: int):
        """Commit, finalize, and re-run the finality checks after deliveries."""
        newly = try_commit(self.store, self.schedule, self.book, self.record)
        if newly:
            self._finalize(newly)
        self.engine.evaluate()
        self._collect_awards()

    def _finalize(self, newly: list):
        for leader in newly:
            idx = self.record.committed.index(leader)
            prev_round = self.record.committed[idx - 1].round if idx > 0 else 0
            wm = max(0, watermark_floor(prev_round, self.params.v))
            hist = sorted_history(self.store, leader, self.engine.is_committed, wm,
                                  self.record.committed[idx - 1] if idx > 0 else None)
            blocks = history_blocks(self.store, hist)
            result = self.exec_ledger.run_committed(blocks)
            self.engine.on_committed(blocks, result, commit_round=self.store.max_round,
                                     leader_ordinal=idx)
            for txid, outcome in result.outcomes.items():
                self.newly_final.append((txid, outcome, self.store.max_round, False))

    def _collect_awards(self):
        ledger = self.engine.ledger
        while self._award_cursor < len(ledger.award_log):
            txid, round = ledger.award_log[self._award_cursor]
            self._award_cursor += 1
            rec = ledger.txs[txid]
            self.newly_final.append((txid, rec.sto_outcome, round, True))

    # ------------------------------------------------------------- advancing

    def ready_to_advance(self) -> bool:
        if self.current_round == 0:
            return True
        return len(self.store.round_blocks(self.current_round)) >= self.params.quorum

    def try_advance(self, tick: int) -> bool:
        """Broadcast the next block once a quorum of the current round arrived.

        On steady-leader rounds the node waits up to the leader timeout for
        the expected leader block before moving on without it.
        """
        if self.crashed or self.current_round >= self.round_budget:
            return False
        if not self.ready_to_advance():
            return False
        nxt = self.current_round + 1
        if self.current_round >= 1 and is_steady_round(self.current_round):
            la = self.schedule.steady_author(self.current_round)
            lb = BlockId(la, self.current_round)
            if lb not in self.store and \
                    self.net.missing_status(self.index, la, self.current_round) != DEFINITELY_MISSING:
                if self.advance_deadline is None:
                    self.advance_deadline = tick + self.params.leader_timeout
                    return False
                if tick < self.advance_deadline:
                    return False
        parents = tuple(sorted(self.store.round_blocks(self.current_round)))
        txs = self.planner.take(self.index, nxt)
        block = Block(id=BlockId(self.index, nxt),
                      shard=shard_in_charge(self.index, nxt, self.params),
                      parents=parents, txs=tuple(txs))
        self.current_round = nxt
        self.advance_deadline = None
        self.net.note_advance(self.index, nxt, tick)
        self.net.broadcast(self.index, block, tick)
        return True

    def poll_finalized(self) -> list:
        out = self.newly_final
        self.newly_final = []
        return out
