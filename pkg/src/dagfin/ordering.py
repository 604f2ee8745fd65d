"""Sorted causal histories: round-ascending order with a deterministic tie-break."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from .dag import BlockStore
from .types import BlockId


@dataclass
class SortedHistory:
    """The uncommitted sub-DAG below a root, in execution order.

    Order is ascending by (round, author) and ends at the root; every pointer
    inside the history goes from a later entry to an earlier one, so this is
    exactly the reversed Kahn order with author index as the tie-break.
    """

    root: BlockId
    order: list
    excluded_before: Optional[BlockId]
    watermark: Optional[int]


def sorted_history(store: BlockStore, root: BlockId,
                   is_committed: Callable[[BlockId], bool],
                   watermark: int = 0,
                   last_leader: Optional[BlockId] = None) -> SortedHistory:
    """Causal history of root minus committed blocks and watermarked rounds."""
    members = [
        b for b in store.ancestors(root)
        if b.round >= watermark and not is_committed(b)
    ]
    members.sort(key=lambda b: (b.round, b.author))
    return SortedHistory(root=root, order=members,
                         excluded_before=last_leader, watermark=watermark or None)


def watermark_floor(last_leader_round: int, v: int) -> int:
    """Round floor below which dangling blocks drop out of consideration.

    The next leader can only commit two rounds above the last one, so the
    floor trails that position by the public look-back constant.
    """
    if last_leader_round <= 0:
        return 0
    return last_leader_round + 2 - v
