"""Per-node DAG view: block storage, reachability, persistence, round math.

Reachability is kept as a dense boolean ancestor matrix over vertex slots
(one slot per (author, round) pair). A block's row is the union of its
parents' rows, so path queries, persistence counts and vote tallies are all
O(1) row lookups against numpy arrays.
"""

from __future__ import annotations

from typing import Iterable, Optional

import numpy as np

from .types import (
    Block,
    BlockId,
    ConfigError,
    EquivocationError,
    IncompleteViewError,
    ProtocolParams,
)

WAVE_LEN = 4


def shard_in_charge(author: int, round: int, params: ProtocolParams) -> int:
    """Shard the given author may write to in the given round.

    The assignment rotates by one shard per round on a public schedule.
    """
    if round < 1:
        raise ConfigError("rounds start at 1")
    return (author + round - 1) % params.n


def author_in_charge(shard: int, round: int, params: ProtocolParams) -> int:
    """Inverse of shard_in_charge: who writes this shard in this round."""
    if round < 1:
        raise ConfigError("rounds start at 1")
    return (shard - round + 1) % params.n


def wave_of(round: int) -> int:
    """Waves are four rounds long: rounds 1-4 form wave 1, 5-8 wave 2, ..."""
    if round < 1:
        raise ConfigError("rounds start at 1")
    return (round + WAVE_LEN - 1) // WAVE_LEN


def wave_rounds(wave: int) -> tuple:
    """(first, second, third, fourth) round numbers of a wave."""
    base = (wave - 1) * WAVE_LEN
    return (base + 1, base + 2, base + 3, base + 4)


def is_steady_round(round: int) -> bool:
    return round % 2 == 1


class BlockStore:
    """One node's monotonically growing view of the global DAG.

    Blocks enter only after validation and only when all parents are already
    present, so the view stays closed under parent pointers. The delivered
    order is logged for trace dumps and replay checks.
    """

    def __init__(self, params: ProtocolParams, owner: int = -1, capacity_rounds: int = 72):
        self.params = params
        self.owner = owner
        self.blocks: dict[BlockId, Block] = {}
        self.by_round: dict[int, set] = {}
        self.delivered_order: list[BlockId] = []
        self.max_round = 0
        self._cap = params.n * capacity_rounds
        self._reach = np.zeros((self._cap, self._cap), dtype=bool)
        # direct pointer counts from round r+1 blocks, keyed by target id
        self._pointers_in: dict[BlockId, int] = {}

    def _vid(self, bid: BlockId) -> int:
        return (bid.round - 1) * self.params.n + bid.author

    def _grow(self, needed: int):
        new_cap = max(needed, int(self._cap * 1.5))
        reach = np.zeros((new_cap, new_cap), dtype=bool)
        reach[: self._cap, : self._cap] = self._reach
        self._reach = reach
        self._cap = new_cap

    def __contains__(self, bid: BlockId) -> bool:
        return bid in self.blocks

    def get(self, bid: BlockId) -> Optional[Block]:
        return self.blocks.get(bid)

    def round_blocks(self, round: int) -> set:
        return self.by_round.get(round, set())

    def validate(self, b: Block):
        p = self.params
        if b.id.round < 1:
            raise ConfigError(f"{b.id}: rounds start at 1")
        if not (0 <= b.id.author < p.n):
            raise ConfigError(f"{b.id}: author out of range")
        if b.shard != shard_in_charge(b.id.author, b.id.round, p):
            raise ConfigError(f"{b.id}: shard {b.shard} does not match the rotation")
        if b.id.round == 1:
            if b.parents:
                raise ConfigError(f"{b.id}: round-1 blocks have no parents")
        else:
            if len(b.parents) < p.quorum:
                raise ConfigError(
                    f"{b.id}: needs >= {p.quorum} parents, got {len(b.parents)}"
                )
            for parent in b.parents:
                if parent.round != b.id.round - 1:
                    raise ConfigError(f"{b.id}: parent {parent} not from previous round")
        if len({q.author for q in b.parents}) != len(b.parents):
            raise ConfigError(f"{b.id}: duplicate parent authors")
        for tx in b.txs:
            tx.validate()
            if tx.home_shard != b.shard:
                raise ConfigError(
                    f"{b.id}: tx {tx.txid} writes shard {tx.home_shard}, "
                    f"block is in charge of {b.shard}"
                )

    def insert(self, b: Block):
        """Insert a validated block whose parents are all present."""
        existing = self.blocks.get(b.id)
        if existing is not None:
            if existing.digest() != b.digest():
                raise EquivocationError(f"conflicting payloads for {b.id}")
            return
        self.validate(b)
        vid = self._vid(b.id)
        if vid >= self._cap:
            self._grow(vid + self.params.n)
        row = self._reach[vid]
        for parent in b.parents:
            if parent not in self.blocks:
                raise IncompleteViewError(f"{b.id}: parent {parent} not in view")
            row |= self._reach[self._vid(parent)]
            row[self._vid(parent)] = True
            self._pointers_in[parent] = self._pointers_in.get(parent, 0) + 1
        row[vid] = True
        self.blocks[b.id] = b
        self.by_round.setdefault(b.id.round, set()).add(b.id)
        self.delivered_order.append(b.id)
        if b.id.round > self.max_round:
            self.max_round = b.id.round

    def has_path(self, src: BlockId, dst: BlockId) -> bool:
        """True iff a pointer chain leads from src down to dst (reflexive)."""
        if src not in self.blocks or dst not in self.blocks:
            raise IncompleteViewError(f"path query on unknown block {src} -> {dst}")
        if src == dst:
            return True
        return bool(self._reach[self._vid(src)][self._vid(dst)])

    def ancestors(self, root: BlockId) -> list:
        """All blocks reachable from root, including root itself."""
        if root not in self.blocks:
            raise IncompleteViewError(f"unknown root {root}")
        vids = np.flatnonzero(self._reach[self._vid(root)])
        n = self.params.n
        return [BlockId(int(v) % n, int(v) // n + 1) for v in vids]

    def reach_row(self, root: BlockId) -> np.ndarray:
        return self._reach[self._vid(root)]

    def pointers_to(self, bid: BlockId) -> int:
        """Direct next-round pointers observed so far."""
        return self._pointers_in.get(bid, 0)

    def persists(self, bid: BlockId, at_round: int) -> bool:
        """True iff >= f+1 blocks of at_round in this view have a path to bid.

        Monotone in view growth: false only means not enough information yet.
        """
        if at_round <= bid.round:
            raise ConfigError("persistence is judged at a later round")
        if bid not in self.blocks:
            return False
        if at_round == bid.round + 1:
            return self._pointers_in.get(bid, 0) >= self.params.f + 1
        target = self._vid(bid)
        count = 0
        for other in self.by_round.get(at_round, ()):
            if self._reach[self._vid(other)][target]:
                count += 1
                if count >= self.params.f + 1:
                    return True
        return False
