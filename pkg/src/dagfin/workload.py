"""Seeded workload planner: per-block transaction generation.

All content is a pure function of (seed, round, author) plus the queue of
externally submitted transactions (atomic-pair halves, chain elements), so
two runs with equal seeds build byte-identical blocks. Transactions are
shard-bound: queued items are consumed by whichever node is in charge of the
shard at the first round at or after their submission round.
"""

from __future__ import annotations

import random
from .dag import author_in_charge, shard_in_charge
from .types import Body, ConfigError, Transaction, TxKind, derive_seed

DEFAULT_KEYS_PER_SHARD = 16
CHAIN_KEY_BASE = 1 << 20   # chain keys live far above the random workload keys


class WorkloadSpec:
    """Validated workload knobs for a run."""

    def __init__(self, cfg: dict, n: int):
        self.alpha_pct = cfg.get("alpha_pct", 100)
        self.beta_pct = cfg.get("beta_pct", 0)
        self.gamma_pct = cfg.get("gamma_pct", 0)
        if self.alpha_pct + self.beta_pct + self.gamma_pct != 100:
            raise ConfigError("alpha/beta/gamma percentages must sum to 100")
        self.cross_block_pct = cfg.get("cross_block_pct", 50)
        self.cross_shard_count = cfg.get("cross_shard_count", min(2, n - 1))
        if self.cross_shard_count >= n:
            raise ConfigError("cross_shard_count must be below the node count")
        self.cross_shard_failure_pct = cfg.get("cross_shard_failure_pct", 0)
        self.txs_per_block = cfg.get("txs_per_block", 3)
        self.keys_per_shard = cfg.get("keys_per_shard", DEFAULT_KEYS_PER_SHARD)
        self.chains = cfg.get("chains", [])
        self.chain_mode = cfg.get("chain_mode", "pipelined")
        self.injections = cfg.get("injections", [])

    def to_json(self) -> dict:
        return {
            "alpha_pct": self.alpha_pct, "beta_pct": self.beta_pct,
            "gamma_pct": self.gamma_pct, "cross_block_pct": self.cross_block_pct,
            "cross_shard_count": self.cross_shard_count,
            "cross_shard_failure_pct": self.cross_shard_failure_pct,
            "txs_per_block": self.txs_per_block,
            "keys_per_shard": self.keys_per_shard,
            "chains": self.chains, "chain_mode": self.chain_mode,
            "injections": self.injections,
        }


class WorkloadPlanner:
    def __init__(self, seed: int, params, spec: WorkloadSpec, crashed=frozenset()):
        self.seed = seed
        self.params = params
        self.spec = spec
        self.crashed = frozenset(crashed)
        self._queued: dict[int, list] = {}      # shard -> [(earliest_round, seq, tx)]
        self._queue_seq = 0
        self._planned_upto = 0
        self._txn = 0

    # ------------------------------------------------------------- queueing

    def queue(self, shard: int, earliest_round: int, tx: Transaction):
        """Submit a transaction for the shard's next block at or after a round."""
        self._queued.setdefault(shard, []).append((earliest_round, self._queue_seq, tx))
        self._queue_seq += 1

    def fresh_txid(self, tag: str) -> str:
        self._txn += 1
        return f"{tag}-{self._txn}"

    # ------------------------------------------------------------- planning

    def _rng(self, *tags) -> random.Random:
        return random.Random(derive_seed(self.seed, "workload", *tags))

    def ensure_round(self, r: int):
        while self._planned_upto < r:
            self._planned_upto += 1
            self._plan_round(self._planned_upto)

    def _plan_round(self, r: int):
        n = self.params.n
        spec = self.spec
        rows: dict[int, list] = {}        # author -> (kind, salt, write key)
        writes_of: dict[int, list] = {}   # author -> write keys planned in pass 1
        foreign_of: dict[int, list] = {}
        # pass 1: decide kinds and write keys so pass 2 can wire conflicts
        for a in range(n):
            rng = self._rng(r, a)
            shard = shard_in_charge(a, r, self.params)
            cross_block = rng.randrange(100) < spec.cross_block_pct and n > 1
            rows[a] = []
            for _ in range(spec.txs_per_block):
                kind = TxKind.LOCAL
                if cross_block:
                    roll = rng.randrange(100)
                    if roll < spec.gamma_pct:
                        kind = TxKind.PAIRED_SUB
                    elif roll < spec.gamma_pct + spec.beta_pct:
                        kind = TxKind.CROSS_READ
                salt = rng.getrandbits(32)
                wkey = (shard, rng.randrange(spec.keys_per_shard))
                rows[a].append((kind, salt, wkey))
            writes_of[a] = [w for _, _, w in rows[a]]
            span = rng.randint(0, spec.cross_shard_count) if cross_block else 0
            foreign = [s for s in range(n) if s != shard]
            rng.shuffle(foreign)
            foreign_of[a] = foreign[:max(1, span)] if foreign else []
        # pass 2: assemble transactions, wiring cross-shard reads and pairs;
        # everything is submitted shard-bound, so a crashed producer only
        # delays its shard's transactions until the rotation moves on
        for a in range(n):
            rng = self._rng(r, a, "wire")
            shard = shard_in_charge(a, r, self.params)
            for i, (kind, salt, wkey) in enumerate(rows[a]):
                txid = f"t{r}n{a}i{i}"
                if kind == TxKind.LOCAL or not foreign_of[a]:
                    self.queue(shard, r, self._make_local(rng, txid, shard, wkey, salt))
                elif kind == TxKind.CROSS_READ:
                    self.queue(shard, r, self._make_cross_read(
                        rng, r, txid, shard, wkey, foreign_of[a], writes_of))
                else:
                    self._queue_pair(rng, r, txid, shard, wkey, foreign_of[a])
        for inj in spec.injections:
            if inj["round"] == r:
                self._inject(inj)

    def _make_local(self, rng, txid, shard, wkey, salt) -> Transaction:
        body = rng.choice([Body.PUT, Body.ADD, Body.COPY])
        reads = ()
        if body in (Body.ADD, Body.COPY):
            reads = ((shard, rng.randrange(self.spec.keys_per_shard)),)
        return Transaction(txid=txid, kind=TxKind.LOCAL, reads=reads,
                           writes=(wkey,), body=body, const=salt)

    def _make_cross_read(self, rng, r, txid, shard, wkey, foreign, writes_of) -> Transaction:
        target = rng.choice(foreign)
        conflict = rng.randrange(100) < self.spec.cross_shard_failure_pct
        if conflict:
            # the knob asks for a read key that *is* modified this round, so
            # the conflicting writer must be a shard with a live producer
            live = [s for s in foreign
                    if author_in_charge(s, r, self.params) not in self.crashed
                    and writes_of.get(author_in_charge(s, r, self.params))]
            if live:
                target = rng.choice(live)
                host = author_in_charge(target, r, self.params)
                rkey = rng.choice(writes_of[host])
            else:
                rkey = (target, rng.randrange(self.spec.keys_per_shard))
        else:
            rkey = (target, rng.randrange(self.spec.keys_per_shard))
        body = rng.choice([Body.COPY, Body.ADD])
        return Transaction(txid=txid, kind=TxKind.CROSS_READ, reads=(rkey,),
                           writes=(wkey,), body=body, const=rng.getrandbits(16))

    def _queue_pair(self, rng, r, txid, shard, wkey, foreign):
        """Queue both halves of an atomic value swap across two shards."""
        target = rng.choice(foreign)
        partner_id = txid + "p"
        pkey = (target, rng.randrange(self.spec.keys_per_shard))
        sub1 = Transaction(txid=txid, kind=TxKind.PAIRED_SUB, reads=(pkey,),
                           writes=(wkey,), body=Body.COPY, partner=partner_id)
        sub2 = Transaction(txid=partner_id, kind=TxKind.PAIRED_SUB, reads=(wkey,),
                           writes=(pkey,), body=Body.COPY, partner=txid)
        delay = 0
        if rng.randrange(100) < self.spec.cross_shard_failure_pct:
            delay = 1 + rng.randrange(2)   # partner lands in a later round
        self.queue(shard, r, sub1)
        self.queue(target, r + delay, sub2)

    def _inject(self, inj: dict):
        """Scripted transaction placement for regression scenarios."""
        r = inj["round"]
        shard = inj["shard"]
        tx = Transaction(
            txid=inj["txid"], kind=TxKind(inj.get("kind", "local")),
            reads=tuple(tuple(k) for k in inj.get("reads", [])),
            writes=tuple(tuple(k) for k in inj.get("writes", [(shard, 0)])),
            body=Body(inj.get("body", "put")), const=inj.get("const", 0),
        )
        self.queue(shard, r, tx)

    # ------------------------------------------------------------ consuming

    def take(self, author: int, round: int) -> list:
        """Transactions for the block (author, round): the shard's backlog."""
        self.ensure_round(round)
        shard = shard_in_charge(author, round, self.params)
        q = self._queued.get(shard, [])
        ready = [item for item in q if item[0] <= round]
        if ready:
            self._queued[shard] = [item for item in q if item[0] > round]
        return [tx for _, _, tx in sorted(ready, key=lambda it: it[1])]
