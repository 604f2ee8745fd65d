"""Leader schedule, vote classification, and the commit rules.

Each four-round wave carries two deterministically scheduled steady leaders
(first and third rounds) and one coin-selected fallback leader (a first-round
block, revealed at wave end). A node's vote type for a wave is fixed by its
first-round block: steady if that block's causal history shows the previous
wave made progress, fallback otherwise.

A leader commits directly on a 2f+1 vote quorum in the local view. When a
leader commits, undecided earlier leaders are committed too if they hold
f+1 votes of their own type and fewer than f+1 of the other type *within the
causal history of the walk anchor* - counting inside the anchor keeps the
decision identical at every node, because block content never varies.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .dag import BlockStore, is_steady_round, wave_of, wave_rounds
from .types import BlockId, ConfigError, ProtocolParams, derive_seed

STEADY = "steady"
FALLBACK = "fallback"


class VoteType(str, Enum):
    STEADY_VOTE = "steady"
    FALLBACK_VOTE = "fallback"


@dataclass(frozen=True)
class Slot:
    """One potential leader position in the global slot sequence."""

    index: int
    wave: int
    kind: str      # STEADY or FALLBACK
    round: int     # round of the leader block


class LeaderSchedule:
    """Public, seeded leader schedule shared by every node in a run.

    Steady leaders are drawn per odd round from a seeded generator with the
    restriction that consecutive steady leaders differ; the fallback leader
    of a wave is an independent uniform draw, revealed only at wave end.
    """

    def __init__(self, params: ProtocolParams):
        self.params = params
        self._steady: list[int] = []   # k-th entry = leader of round 2k+1
        self._fallback: dict[int, int] = {}

    def steady_author(self, round: int) -> int:
        if not is_steady_round(round):
            raise ConfigError(f"round {round} has no steady leader slot")
        if self.params.steady_override is not None:
            return self.params.steady_override[(round - 1) // 2]
        k = (round - 1) // 2
        while len(self._steady) <= k:
            j = len(self._steady)
            rng = random.Random(derive_seed(self.params.coin_seed, "steady", j))
            pick = rng.randrange(self.params.n)
            if self.params.n > 1 and self._steady and pick == self._steady[-1]:
                pick = (pick + 1) % self.params.n
            self._steady.append(pick)
        return self._steady[k]

    def fallback_author(self, wave: int) -> int:
        if wave not in self._fallback:
            rng = random.Random(derive_seed(self.params.coin_seed, "fallback", wave))
            self._fallback[wave] = rng.randrange(self.params.n)
        return self._fallback[wave]

    def slots_upto(self, round: int) -> list[Slot]:
        """All leader slots whose block round is <= round, in commit order."""
        out = []
        idx = 0
        w = 1
        while True:
            r1, _, r3, _ = wave_rounds(w)
            if r1 > round:
                break
            out.append(Slot(idx, w, STEADY, r1)); idx += 1
            out.append(Slot(idx, w, FALLBACK, r1)); idx += 1
            if r3 <= round:
                out.append(Slot(idx, w, STEADY, r3)); idx += 1
            w += 1
        return out

    def slot_author(self, slot: Slot) -> int:
        if slot.kind == STEADY:
            return self.steady_author(slot.round)
        return self.fallback_author(slot.wave)


def steady_leader(round: int, schedule: LeaderSchedule) -> int:
    """Steady leader slot for a round; errors on even rounds."""
    return schedule.steady_author(round)


def fallback_leader(wave: int, schedule: LeaderSchedule) -> int:
    """Coin-selected fallback leader of a wave; identical at all nodes."""
    return schedule.fallback_author(wave)


def coin_revealed(store: BlockStore, wave: int) -> bool:
    """The wave coin opens once a quorum of wave-end blocks is in view."""
    r4 = wave_rounds(wave)[3]
    return len(store.round_blocks(r4)) >= store.params.quorum


class VoteBook:
    """Per-view vote-type memo plus tally helpers.

    Vote types are a pure function of block content (every block reaches its
    author's first block of the wave through the self-parent chain), so the
    memo never needs invalidation.
    """

    def __init__(self, store: BlockStore, schedule: LeaderSchedule):
        self.store = store
        self.schedule = schedule
        self._types: dict[tuple, Optional[str]] = {}

    def vote_type(self, author: int, wave: int) -> Optional[str]:
        """Vote type of a node for a wave; None while its first-round block is unseen."""
        key = (author, wave)
        if key in self._types:
            return self._types[key]
        if wave == 1:
            self._types[key] = STEADY
            return STEADY
        first = BlockId(author, wave_rounds(wave)[0])
        if first not in self.store:
            return None  # not memoized: may appear later
        result = FALLBACK
        if self._history_shows_progress(first, wave - 1):
            result = STEADY
        self._types[key] = result
        return result

    def _history_shows_progress(self, root: BlockId, prev_wave: int) -> bool:
        """Did root's causal history witness a committed leader of prev_wave?"""
        store = self.store
        row = store.reach_row(root)
        r1p, _, r3p, r4p = wave_rounds(prev_wave)
        quorum = store.params.quorum
        # second steady leader of the previous wave, votes are wave-end pointers
        s2 = BlockId(self.schedule.steady_author(r3p), r3p)
        if s2 in store and row[store._vid(s2)]:
            votes = 0
            for vb in store.round_blocks(r4p):
                if not row[store._vid(vb)]:
                    continue
                if self.vote_type(vb.author, prev_wave) != STEADY:
                    continue
                if s2 in store.get(vb).parents:
                    votes += 1
            if votes >= quorum:
                return True
        # fallback leader of the previous wave, votes are wave-end paths
        fb = BlockId(self.schedule.fallback_author(prev_wave), r1p)
        if fb in store and row[store._vid(fb)]:
            votes = 0
            for vb in store.round_blocks(r4p):
                if not row[store._vid(vb)]:
                    continue
                if self.vote_type(vb.author, prev_wave) != FALLBACK:
                    continue
                if store.has_path(vb, fb):
                    votes += 1
            if votes >= quorum:
                return True
        return False

    def steady_votes(self, leader: BlockId, within: Optional[BlockId] = None) -> int:
        """Steady votes for a steady leader: next-round pointers by steady voters."""
        store = self.store
        w = wave_of(leader.round)
        row = store.reach_row(within) if within is not None else None
        votes = 0
        for vb in store.round_blocks(leader.round + 1):
            if row is not None and not row[store._vid(vb)]:
                continue
            if self.vote_type(vb.author, w) != STEADY:
                continue
            if leader in store.get(vb).parents:
                votes += 1
        return votes

    def fallback_votes(self, leader: BlockId, within: Optional[BlockId] = None) -> int:
        """Fallback votes: wave-end paths to the fallback leader by fallback voters."""
        store = self.store
        w = wave_of(leader.round)
        r4 = wave_rounds(w)[3]
        row = store.reach_row(within) if within is not None else None
        votes = 0
        for vb in store.round_blocks(r4):
            if row is not None and not row[store._vid(vb)]:
                continue
            if self.vote_type(vb.author, w) != FALLBACK:
                continue
            if store.has_path(vb, leader):
                votes += 1
        return votes

    def typed_voters_present(self, wave: int, vtype: str,
                             within: Optional[BlockId] = None) -> int:
        """Upper bound on votes the given type can muster inside a history."""
        store = self.store
        r4 = wave_rounds(wave)[3]
        row = store.reach_row(within) if within is not None else None
        count = 0
        for vb in store.round_blocks(r4):
            if row is not None and not row[store._vid(vb)]:
                continue
            if self.vote_type(vb.author, wave) == vtype:
                count += 1
        return count

    def possible_voters(self, wave: int, vtype: str, author_alive) -> int:
        """Max voters of a type the wave could still produce, counting unknowns.

        author_alive(author, round) says whether a missing first-round block
        could still appear; used by the early-finality checks to decide when
        a leader type is provably out of the running.
        """
        first_round = wave_rounds(wave)[0]
        count = 0
        for a in range(self.store.params.n):
            t = self.vote_type(a, wave)
            if t == vtype:
                count += 1
            elif t is None and author_alive(a, first_round):
                count += 1
        return count


def classify_vote(book: VoteBook, voter_block: BlockId) -> VoteType:
    """Vote classification for a first-round block of a wave."""
    w = wave_of(voter_block.round)
    if voter_block.round != wave_rounds(w)[0]:
        raise ConfigError(f"{voter_block} is not a first-round block")
    t = book.vote_type(voter_block.author, w)
    if t is None:
        raise ConfigError(f"{voter_block} not in view")
    return VoteType.STEADY_VOTE if t == STEADY else VoteType.FALLBACK_VOTE


@dataclass
class LeaderRecord:
    """A node's committed-leader bookkeeping: the totally ordered list."""

    committed: list = field(default_factory=list)       # BlockId, commit order
    committed_slots: list = field(default_factory=list)  # Slot per entry
    last_slot_index: int = -1
    tie_events: int = 0   # leaders skipped with some votes but below f+1 both ways

    @property
    def last_round(self) -> int:
        return self.committed[-1].round if self.committed else 0


def try_commit(store: BlockStore, schedule: LeaderSchedule, book: VoteBook,
               record: LeaderRecord) -> list:
    """Advance the committed-leader list as far as the view allows.

    Returns newly committed leaders in commit order. Direct commits use the
    full local view; the walk back to the previous committed leader counts
    votes inside the moving anchor's causal history only.
    """
    params = store.params
    newly = []
    slots = schedule.slots_upto(store.max_round)
    while True:
        found = None
        for slot in slots[record.last_slot_index + 1:]:
            if slot.round >= store.max_round:
                break  # no vote rounds in view yet
            if slot.kind == FALLBACK and not coin_revealed(store, slot.wave):
                continue
            cand = BlockId(schedule.slot_author(slot), slot.round)
            if cand not in store:
                continue
            if slot.kind == STEADY:
                ok = book.steady_votes(cand) >= params.quorum
            else:
                ok = book.fallback_votes(cand) >= params.quorum
            if ok:
                found = (slot, cand)
                break
        if found is None:
            return newly
        slot, leader = found
        chain = [(slot, leader)]
        anchor = leader
        for back in range(slot.index - 1, record.last_slot_index, -1):
            prev = slots[back]
            if prev.kind == FALLBACK:
                # a fallback candidate needs wave-end voters inside the anchor;
                # when the coin is still closed none can be there
                if book.typed_voters_present(prev.wave, FALLBACK, within=anchor) < params.f + 1:
                    continue
            cand = BlockId(schedule.slot_author(prev), prev.round)
            if cand not in store or not store.has_path(anchor, cand):
                continue
            if cand == anchor:
                continue
            if prev.kind == STEADY:
                mine = book.steady_votes(cand, within=anchor)
                other = book.typed_voters_present(prev.wave, FALLBACK, within=anchor)
            else:
                mine = book.fallback_votes(cand, within=anchor)
                other = book.typed_voters_present(prev.wave, STEADY, within=anchor)
            if mine >= params.f + 1 and other < params.f + 1:
                chain.append((prev, cand))
                anchor = cand
            elif 0 < mine < params.f + 1 and other < params.f + 1:
                record.tie_events += 1
        for s, bid in reversed(chain):
            if bid in record.committed:
                continue
            record.committed.append(bid)
            record.committed_slots.append(s)
            newly.append(bid)
        record.last_slot_index = slot.index
