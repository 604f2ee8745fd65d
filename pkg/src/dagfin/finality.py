"""Early-finality decision layer.

A node surveys its local DAG and awards a transaction a *safe outcome* (STO)
once local conditions prove the value cannot change when the block is later
committed: conflicts from earlier rounds are pinned by an unbroken in-charge
chain of safe blocks, next-round leaders are constrained by the leader check,
same-round cross-shard writers must be absent or already committed, and
unresolved atomic pairs block conflicting keys through the delay list.
Awards are never retracted; the safety oracle checks every award against the
finalized outcome after the run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .dag import author_in_charge, is_steady_round, wave_of, wave_rounds
from .execution import ExecLedger, history_blocks
from .leaders import FALLBACK, STEADY, LeaderRecord, LeaderSchedule, VoteBook, coin_revealed
from .net import DEFINITELY_MISSING, POSSIBLY_EXISTS
from .ordering import sorted_history, watermark_floor
from .types import Block, BlockId, Outcome, Transaction, TxKind

GAMMA_AWAIT_PARTNER = "gamma_await_partner"
SPECULATIVE_PENDING = "speculative_pending"

MODE_EARLY = "early"
MODE_NAIVE = "naive"
MODE_BASELINE = "baseline"

UNKNOWN = "unknown"


@dataclass
class DelayEntry:
    txid: str
    round: int
    keys: frozenset
    reason: str
    partner: Optional[str] = None   # set for pair halves


class DelayList:
    """Transactions whose execution position is still unresolved.

    A plain entry blocks safe outcomes for any same-or-later-round
    transaction touching one of its modified keys. Pair entries stay until
    the pair executes; whether they block a given host depends on the host's
    position relative to the pair, which the engine decides.
    """

    def __init__(self):
        self.entries: dict[str, DelayEntry] = {}

    def add(self, txid: str, round: int, keys, reason: str, partner=None):
        self.entries[txid] = DelayEntry(txid, round, frozenset(keys), reason, partner)

    def remove(self, txid: str):
        self.entries.pop(txid, None)

    def snapshot(self) -> list:
        return sorted((e.round, e.txid, e.reason) for e in self.entries.values())


@dataclass
class TxRecord:
    sto_round: Optional[int] = None
    sto_outcome: Optional[Outcome] = None
    commit_round: Optional[int] = None
    final_outcome: Optional[Outcome] = None


class FinalityLedger:
    """Per-transaction finality bookkeeping: early award vs committed result."""

    def __init__(self):
        self.txs: dict[str, TxRecord] = {}
        self.sbo_round: dict[BlockId, int] = {}
        self.award_log: list = []   # (txid, round), append-only award order

    def rec(self, txid: str) -> TxRecord:
        if txid not in self.txs:
            self.txs[txid] = TxRecord()
        return self.txs[txid]

    def has_sto(self, txid: str) -> bool:
        r = self.txs.get(txid)
        return r is not None and r.sto_round is not None

    def award_sto(self, txid: str, round: int, outcome: Outcome):
        r = self.rec(txid)
        if r.sto_round is not None:
            raise AssertionError(f"safe outcome for {txid} awarded twice")
        if r.commit_round is not None:
            raise AssertionError(f"{txid} already committed; award would not be early")
        r.sto_round = round
        r.sto_outcome = outcome
        self.award_log.append((txid, round))

    def set_commit_round(self, txid: str, round: int):
        """Record when the transaction's commitment became known.

        An award always precedes commitment in event order (awarding a
        committed transaction raises), but under asynchrony both can land
        inside one view round; the commit label then rounds up to keep the
        strict award-before-commit ordering visible in round units.
        """
        r = self.rec(txid)
        if r.commit_round is None:
            r.commit_round = round
            if r.sto_round is not None and r.sto_round >= round:
                r.commit_round = r.sto_round + 1

    def set_final(self, txid: str, outcome: Outcome):
        r = self.rec(txid)
        r.final_outcome = outcome

    def has_sbo(self, bid: BlockId) -> bool:
        return bid in self.sbo_round


class FinalityEngine:
    """Drives the eligibility checks over one node's growing view."""

    def __init__(self, owner: int, params, store, schedule: LeaderSchedule,
                 book: VoteBook, record: LeaderRecord, exec_ledger: ExecLedger,
                 net, mode: str = MODE_EARLY):
        self.owner = owner
        self.params = params
        self.store = store
        self.schedule = schedule
        self.book = book
        self.record = record
        self.exec_ledger = exec_ledger
        self.net = net
        self.mode = mode
        self.ledger = FinalityLedger()
        self.dl = DelayList()
        self.committed_by: dict[BlockId, int] = {}
        self.watermark = 0
        self.pending: set[BlockId] = set()
        self.tx_location: dict[str, BlockId] = {}
        self.tx_by_id: dict[str, Transaction] = {}
        self._outcome_cache: dict = {}
        self._frontier_cache: dict = {}
        self._dirty = True

    # ------------------------------------------------------------------ view

    @property
    def view_round(self) -> int:
        return self.store.max_round

    def is_committed(self, bid: BlockId) -> bool:
        return bid in self.committed_by

    def author_alive(self, author: int, round: int) -> bool:
        return self.net.missing_status(self.owner, author, round) == POSSIBLY_EXISTS

    def apply_watermark(self):
        """Refresh the look-back floor after a commit advanced the frontier."""
        if self.record.committed:
            floor = watermark_floor(self.record.committed[-1].round, self.params.v)
            if floor > self.watermark:
                self.watermark = floor
                self._frontier_cache.clear()

    def on_block(self, blk: Block):
        self.pending.add(blk.id)
        self._frontier_cache.clear()
        self._dirty = True
        for tx in blk.txs:
            self.tx_location[tx.txid] = blk.id
            self.tx_by_id[tx.txid] = tx
            if tx.kind == TxKind.PAIRED_SUB:
                # guards the write keys until the pair actually executes
                self.dl.add(tx.txid, blk.id.round, tx.writes,
                            GAMMA_AWAIT_PARTNER, partner=tx.partner)
            elif tx.condition is not None:
                self.dl.add(tx.txid, blk.id.round, tx.writes, SPECULATIVE_PENDING)

    def on_committed(self, blocks: list, exec_result, commit_round: int,
                     leader_ordinal: int = -1):
        """Record commitment and executed outcomes for a finalized history."""
        for blk in blocks:
            if blk.id in self.committed_by:
                raise AssertionError(f"{blk.id} committed twice")
            self.committed_by[blk.id] = leader_ordinal
            self.pending.discard(blk.id)
            for tx in blk.txs:
                self.ledger.set_commit_round(tx.txid, commit_round)
        for txid, outcome in exec_result.outcomes.items():
            self.ledger.set_final(txid, outcome)
            self.dl.remove(txid)
        for tx in exec_result.parked_added:
            loc = self.tx_location[tx.txid]
            self.dl.add(tx.txid, loc.round, tx.writes, GAMMA_AWAIT_PARTNER,
                        partner=tx.partner)
        self._outcome_cache.clear()
        self._frontier_cache.clear()
        self._dirty = True
        self.apply_watermark()

    # ------------------------------------------------- shard-chain primitives

    def earliest_uncommitted(self, shard: int, before_round: int):
        """Earliest uncommitted in-charge block of a shard strictly below a round.

        Returns a BlockId, None when every earlier slot is committed or can
        never exist, or UNKNOWN when an unseen slot may still hold a block.
        Cached until the view or the committed frontier changes.
        """
        key = (shard, before_round)
        hit = self._frontier_cache.get(key)
        if hit is not None:
            return hit[0]
        start = max(1, self.watermark)
        result = None
        for q in range(start, before_round):
            bid = BlockId(author_in_charge(shard, q, self.params), q)
            if bid in self.store:
                if not self.is_committed(bid):
                    result = bid
                    break
            else:
                if self.net.missing_status(self.owner, bid.author, q) != DEFINITELY_MISSING:
                    result = UNKNOWN
                    break
        self._frontier_cache[key] = (result,)
        return result

    def complete_shard_history(self, bid: BlockId, shard: int):
        """Pointer chain from bid down through every uncommitted in-charge block.

        Returns the chain oldest-first, None when the chain is broken, or
        UNKNOWN while the earliest-uncommitted frontier is unresolved.
        """
        eu = self.earliest_uncommitted(shard, bid.round)
        if eu == UNKNOWN:
            return UNKNOWN
        if eu is None:
            return [bid]
        chain = [bid]
        cur = self.store.get(bid)
        for q in range(bid.round - 1, eu.round - 1, -1):
            nxt = BlockId(author_in_charge(shard, q, self.params), q)
            blk = self.store.get(nxt)
            if blk is None or nxt not in cur.parents:
                return None
            chain.append(nxt)
            cur = blk
        return list(reversed(chain))

    def _slot_passed(self, round: int, kind: str) -> bool:
        """True when the commit walk already went past this slot uncommitted."""
        w = wave_of(round)
        # three slots per wave in commit order: steady1, fallback, steady2
        base = 3 * (w - 1)
        if round == wave_rounds(w)[0]:
            index = base if kind == STEADY else base + 1
        else:
            index = base + 2
        return index <= self.record.last_slot_index

    # ---------------------------------------------------------- leader check

    def leader_check(self, bid: BlockId, shard: int) -> bool:
        """No next-round leader in charge of the shard can execute before bid."""
        nxt = bid.round + 1
        if nxt % 2 == 0:
            return True  # no leader slot in even rounds
        if not self.is_committed(bid):
            for leader in self.record.committed:
                if leader.round == nxt:
                    return True  # ordering already settled by that commit
        w = wave_of(nxt)
        first_of_wave = nxt == wave_rounds(w)[0]
        steady_possible = (
            not self._slot_passed(nxt, STEADY)
            and self.book.possible_voters(w, STEADY, self.author_alive) >= self.params.f + 1
        )
        fallback_possible = (
            first_of_wave
            and not self._slot_passed(nxt, FALLBACK)
            and self.book.possible_voters(w, FALLBACK, self.author_alive) >= self.params.f + 1
        )
        if not steady_possible and not fallback_possible:
            return True  # no leader of this round can ever gather votes
        in_charge = author_in_charge(shard, nxt, self.params)
        need_pointer = False
        if fallback_possible:
            if coin_revealed(self.store, w):
                need_pointer = self.schedule.fallback_author(w) == in_charge
            else:
                need_pointer = True  # any first-round block may be the coin's pick
        if not need_pointer and steady_possible:
            need_pointer = self.schedule.steady_author(nxt) == in_charge
        if not need_pointer:
            return True
        cand = self.store.get(BlockId(in_charge, nxt))
        if cand is None:
            return self.net.missing_status(self.owner, in_charge, nxt) == DEFINITELY_MISSING
        return bid in cand.parents

    # ------------------------------------------------------ eligibility checks
    #
    # The cross-round pair rule re-hosts the earlier sub-transaction in the
    # prime round and asks whether everything would hold *in that world*.
    # ``hyp`` carries that world: a memo of hypothetical safe-block verdicts
    # evaluated with the pair's delay entries exempted. The normal path
    # passes hyp=None and consults only awarded flags.

    def _sbo_flag(self, bid: BlockId, exempt, hyp) -> bool:
        if self.ledger.has_sbo(bid):
            return True
        if hyp is None:
            return False
        return self._hyp_sbo(bid, exempt, hyp)

    def _hyp_sbo(self, bid: BlockId, exempt, hyp: dict) -> bool:
        if bid in hyp:
            return hyp[bid]
        hyp[bid] = False  # guards pointer cycles, which cannot occur anyway
        blk = self.store.get(bid)
        if blk is None or self.is_committed(bid):
            return False
        if not self._chain_and_persist(blk, blk.shard, exempt, hyp):
            return False
        for tx in blk.txs:
            if tx.txid in exempt or self.ledger.has_sto(tx.txid):
                continue
            if tx.kind == TxKind.PAIRED_SUB:
                return False
            if not self.individual_check(tx, blk, exempt, hyp):
                return False
        hyp[bid] = True
        return True

    def _chain_and_persist(self, host: Block, shard: int, exempt=(), hyp=None) -> bool:
        # cheapest clause first: persistence is a counter lookup and gates
        # almost every fresh block out before the leader check runs
        if not self.store.persists(host.id, host.id.round + 1):
            return False
        eu = self.earliest_uncommitted(shard, host.id.round)
        if eu == UNKNOWN:
            return False
        if eu is not None:
            prev = BlockId(author_in_charge(shard, host.id.round - 1, self.params),
                           host.id.round - 1)
            if prev not in host.parents or not self._sbo_flag(prev, exempt, hyp):
                return False
        return self.leader_check(host.id, shard)

    def _writes_key(self, blk: Block, key, exempt) -> bool:
        for tx in blk.txs:
            if tx.txid in exempt:
                continue
            if key in tx.writes:
                return True
        return False

    def _cross_read_clauses(self, tx: Transaction, host: Block, exempt, hyp) -> bool:
        shard_j, _ = read_key = tx.reads[0]
        r = host.id.round
        eu = self.earliest_uncommitted(shard_j, r)
        if eu == UNKNOWN:
            return False
        if eu is not None:
            prev_j = BlockId(author_in_charge(shard_j, r - 1, self.params), r - 1)
            if prev_j not in host.parents or not self._sbo_flag(prev_j, exempt, hyp):
                return False
        # same-round writer of the read shard
        bj = BlockId(author_in_charge(shard_j, r, self.params), r)
        blk_j = self.store.get(bj)
        if blk_j is None:
            if self.net.missing_status(self.owner, bj.author, r) != DEFINITELY_MISSING:
                return False
        elif self._writes_key(blk_j, read_key, exempt) and not self.is_committed(bj):
            return False
        # next-round writer of the read shard
        if not self.leader_check(host.id, shard_j):
            bj1 = BlockId(author_in_charge(shard_j, r + 1, self.params), r + 1)
            blk_j1 = self.store.get(bj1)
            if blk_j1 is None:
                if self.net.missing_status(self.owner, bj1.author, r + 1) != DEFINITELY_MISSING:
                    return False
            elif self._writes_key(blk_j1, read_key, exempt):
                return False
        return True

    def _dl_blocked(self, tx: Transaction, host: Block, exempt) -> bool:
        """Does an unresolved delay entry make the transaction's value uncertain?

        Plain entries block same-or-later-round hosts outright. A pair half
        blocks only hosts positioned at or after the pair's execution point
        (the later half's position), unless the host's causal history holds
        both halves - then the pair executes inside the host's own prefix.
        """
        touched = tx.touched()
        host_pos = (host.id.round, host.id.author)
        for e in self.dl.entries.values():
            if e.txid in exempt or e.txid == tx.txid:
                continue
            if not (e.keys & touched):
                continue
            if e.partner is None:
                if e.round <= host.id.round:
                    return True
                continue
            eloc = self.tx_location[e.txid]
            ploc = self.tx_location.get(e.partner)
            if ploc is None:
                if e.round <= host.id.round:
                    return True
                continue
            lo, hi = sorted([(eloc.round, eloc.author), (ploc.round, ploc.author)])
            if host_pos < lo:
                continue  # host executes before either half can
            # once the earlier half's block is committed the pair can only
            # execute at the later half's position, clearing earlier hosts
            if host_pos < hi and self.is_committed(BlockId(lo[1], lo[0])):
                continue
            return True
        return False

    def individual_check(self, tx: Transaction, host: Block, exempt=(), hyp=None) -> bool:
        """Eligibility of one transaction hosted (possibly virtually) in a block."""
        if self._dl_blocked(tx, host, exempt):
            return False
        if not self._chain_and_persist(host, host.shard, exempt, hyp):
            return False
        foreign = [k for k in tx.reads if k[0] != host.shard]
        if foreign:
            if not self._cross_read_clauses(tx, host, exempt, hyp):
                return False
        return True

    def alpha_sto_check(self, tx: Transaction, host: Block) -> bool:
        return self.individual_check(tx, host)

    def beta_sto_check(self, tx: Transaction, host: Block) -> bool:
        return self.individual_check(tx, host)

    # ---------------------------------------------------------------- pairs

    def _pair_sides(self, tx: Transaction, host: Block):
        ploc = self.tx_location.get(tx.partner)
        if ploc is None:
            return None
        return self.tx_by_id[tx.partner], self.store.get(ploc)

    def _is_prime_side(self, tx: Transaction, host: Block) -> bool:
        ploc = self.tx_location.get(tx.partner)
        if ploc is None:
            return False
        return (host.id.round, host.id.author) > (ploc.round, ploc.author)

    def _others_eligible(self, blk: Block, exempt, hyp=None, strict=False) -> bool:
        """Every other transaction of the block holds (or could hold) a safe outcome.

        strict demands awarded outcomes; the hypothetical path accepts
        eligibility because awards there are gated on the pair's own entry.
        """
        for tx in blk.txs:
            if tx.txid in exempt:
                continue
            if self.ledger.has_sto(tx.txid):
                continue
            if strict:
                return False
            if tx.kind == TxKind.PAIRED_SUB:
                return False
            if not self.individual_check(tx, blk, exempt, hyp):
                return False
        return True

    def _contains(self, cand: BlockId, target: BlockId) -> bool:
        if cand.round < target.round:
            return False
        return self.store.has_path(cand, target)

    def _co_membership(self, b1: BlockId, b2: BlockId) -> bool:
        """Both blocks are bound for the same committed leader's history.

        Requires persistence one round past the later block, and that no
        leader block up to that round holds either of the two in its causal
        history - except a leader exactly one round past the pair, which may
        hold both (it would then commit the pair together).
        """
        if self.is_committed(b1) or self.is_committed(b2):
            return False
        rr = max(b1.round, b2.round) + 1
        if not (self.store.persists(b1, rr) and self.store.persists(b2, rr)):
            return False
        f = self.params.f
        for slot in self.schedule.slots_upto(rr):
            if slot.index <= self.record.last_slot_index:
                continue  # already decided; uncommitted blocks are not inside
            if slot.kind == STEADY:
                if self.book.possible_voters(slot.wave, STEADY, self.author_alive) < f + 1:
                    continue
                if not self._split_safe(BlockId(self.schedule.steady_author(slot.round),
                                                slot.round), b1, b2, rr):
                    return False
            else:
                if self.book.possible_voters(slot.wave, FALLBACK, self.author_alive) < f + 1:
                    continue
                if coin_revealed(self.store, slot.wave):
                    cand = BlockId(self.schedule.fallback_author(slot.wave), slot.round)
                    if not self._split_safe(cand, b1, b2, rr):
                        return False
                else:
                    for a in range(self.params.n):
                        if not self._split_safe(BlockId(a, slot.round), b1, b2, rr):
                            return False
        return True

    def _split_safe(self, cand: BlockId, b1: BlockId, b2: BlockId, rr: int) -> bool:
        if cand == b1 or cand == b2:
            return False
        if cand not in self.store:
            return self.net.missing_status(self.owner, cand.author, cand.round) \
                == DEFINITELY_MISSING
        x1 = self._contains(cand, b1)
        x2 = self._contains(cand, b2)
        if cand.round == rr:
            return x1 == x2  # committing would take both together or neither
        return not x1 and not x2

    def gamma_sto_check(self, tx: Transaction, host: Block) -> bool:
        """Joint eligibility of an atomic pair, driven from the prime side."""
        sides = self._pair_sides(tx, host)
        if sides is None:
            return False
        ptx, pblk = sides
        exempt = (tx.txid, ptx.txid)
        if host.id.round == pblk.id.round:
            if not self.individual_check(tx, host, exempt):
                return False
            if not self.individual_check(ptx, pblk, exempt):
                return False
            if not (self._others_eligible(host, exempt, strict=True)
                    and self._others_eligible(pblk, exempt, strict=True)):
                return False
            return self._co_membership(pblk.id, host.id)
        # cross-round: re-host the earlier half in its shard's block of the
        # prime round, then require the same-round argument to go through in
        # that hypothetical world (the parked half's delay entry is ignored
        # for blocks between the two rounds)
        r2 = host.id.round
        vhost_id = BlockId(author_in_charge(ptx.home_shard, r2, self.params), r2)
        vhost = self.store.get(vhost_id)
        if vhost is None:
            return False
        hyp: dict = {}
        if not self.individual_check(ptx, vhost, exempt, hyp):
            return False
        if not self.individual_check(tx, host, exempt, hyp):
            return False
        if not (self._others_eligible(host, exempt, hyp)
                and self._others_eligible(vhost, exempt, hyp)):
            return False
        return self._co_membership(pblk.id, host.id)

    # ------------------------------------------------------------- outcomes

    def _history_outcomes(self, roots: tuple) -> dict:
        """Outcomes of executing the joint uncommitted history of the roots."""
        epoch = (roots, len(self.record.committed), self.watermark)
        if epoch in self._outcome_cache:
            return self._outcome_cache[epoch]
        members = set()
        for root in roots:
            members.update(
                b for b in self.store.ancestors(root)
                if b.round >= self.watermark and not self.is_committed(b)
            )
        order = sorted(members, key=lambda b: (b.round, b.author))
        result = self.exec_ledger.run_speculative([self.store.get(b) for b in order])
        self._outcome_cache[epoch] = result.outcomes
        return result.outcomes

    def block_sto_round(self, bid: BlockId) -> Optional[int]:
        return self.ledger.sbo_round.get(bid)

    def _award(self, txid: str, outcome: Outcome):
        self.ledger.award_sto(txid, self.view_round, outcome)

    def _is_leader_slot_block(self, bid: BlockId) -> bool:
        if is_steady_round(bid.round) and \
                self.schedule.steady_author(bid.round) == bid.author:
            return True
        w = wave_of(bid.round)
        if bid.round == wave_rounds(w)[0] and coin_revealed(self.store, w) and \
                self.schedule.fallback_author(w) == bid.author:
            return True
        return False

    # ---------------------------------------------------------------- driver

    def evaluate(self):
        """Run the checks over every pending transaction until a fixpoint."""
        if self.mode == MODE_BASELINE:
            return
        if not self._dirty:
            return  # nothing entered the view and nothing committed
        self._dirty = False
        changed = True
        while changed:
            changed = False
            for bid in sorted(self.pending):
                blk = self.store.get(bid)
                if blk is None or self.is_committed(bid):
                    continue
                if self._is_leader_slot_block(bid):
                    self.pending.discard(bid)
                    continue
                if self.mode == MODE_NAIVE:
                    changed |= self._evaluate_naive(blk)
                    continue
                changed |= self._evaluate_block(blk)
            if changed:
                continue

    def _evaluate_naive(self, blk: Block) -> bool:
        if not self.store.persists(blk.id, blk.id.round + 1):
            return False
        outcomes = self._history_outcomes((blk.id,))
        progressed = False
        for tx in blk.txs:
            if self.ledger.has_sto(tx.txid) or tx.txid not in outcomes:
                continue
            self._award(tx.txid, outcomes[tx.txid])
            progressed = True
        if all(self.ledger.has_sto(t.txid) for t in blk.txs):
            self.ledger.sbo_round.setdefault(blk.id, self.view_round)
            self.pending.discard(blk.id)
        return progressed

    def _evaluate_block(self, blk: Block) -> bool:
        progressed = False
        tainted: set = set()   # keys written by earlier txs still lacking a safe outcome
        for tx in blk.txs:
            if self.ledger.has_sto(tx.txid):
                continue
            awarded = False
            if not (set(tx.reads) & tainted):
                if tx.kind == TxKind.PAIRED_SUB:
                    awarded = self._try_pair_award(tx, blk)
                else:
                    if self.individual_check(tx, blk):
                        outcomes = self._history_outcomes((blk.id,))
                        if tx.txid in outcomes:
                            self._award(tx.txid, outcomes[tx.txid])
                            if tx.condition is not None:
                                self.dl.remove(tx.txid)
                            awarded = True
            if awarded:
                progressed = True
            else:
                tainted.update(tx.writes)
        if blk.id not in self.ledger.sbo_round and blk.txs and \
                all(self.ledger.has_sto(t.txid) for t in blk.txs):
            self.ledger.sbo_round[blk.id] = self.view_round
            self.pending.discard(blk.id)
        elif not blk.txs and self._chain_and_persist(blk, blk.shard):
            self.ledger.sbo_round.setdefault(blk.id, self.view_round)
            self.pending.discard(blk.id)
        return progressed

    def _try_pair_award(self, tx: Transaction, blk: Block) -> bool:
        if not self._is_prime_side(tx, blk):
            return False
        if not self.gamma_sto_check(tx, blk):
            return False
        ptx, pblk = self._pair_sides(tx, blk)
        outcomes = self._history_outcomes(tuple(sorted((blk.id, pblk.id))))
        if tx.txid not in outcomes or ptx.txid not in outcomes:
            return False
        self._award(tx.txid, outcomes[tx.txid])
        if not self.ledger.has_sto(ptx.txid):
            self._award(ptx.txid, outcomes[ptx.txid])
        # the pair's delay entries stay until the pair executes; awards only
        # settle the value, not the execution position
        return True
