"""Shared fixtures: hand-built DAG views and a scriptable fake network."""

from __future__ import annotations

from dagfin.dag import BlockStore, shard_in_charge
from dagfin.execution import ExecLedger
from dagfin.finality import FinalityEngine, MODE_EARLY
from dagfin.leaders import LeaderRecord, LeaderSchedule, VoteBook
from dagfin.net import DEFINITELY_MISSING, POSSIBLY_EXISTS
from dagfin.types import Block, BlockId, Body, ProtocolParams, Transaction, TxKind


def params_for(f: int = 1, **kw) -> ProtocolParams:
    return ProtocolParams(n=3 * f + 1, f=f, **kw)


def make_block(params, author, round, parents=(), txs=()):
    return Block(
        id=BlockId(author, round),
        shard=shard_in_charge(author, round, params),
        parents=tuple(parents),
        txs=tuple(txs),
    )


def local_tx(txid, shard, key=0, value=1, body=Body.PUT, read_key=None):
    reads = ((shard, read_key),) if read_key is not None else ()
    return Transaction(txid=txid, kind=TxKind.LOCAL, reads=reads,
                       writes=((shard, key),), body=body, const=value)


def cross_tx(txid, home_shard, read_shard, read_key=0, write_key=0, body=Body.COPY,
             const=0):
    return Transaction(txid=txid, kind=TxKind.CROSS_READ,
                       reads=((read_shard, read_key),),
                       writes=((home_shard, write_key),), body=body, const=const)


def pair_txs(txid_a, txid_b, shard_a, shard_b, key_a=1, key_b=1):
    """A value swap: each half reads the other's key and writes its own."""
    a = Transaction(txid=txid_a, kind=TxKind.PAIRED_SUB,
                    reads=((shard_b, key_b),), writes=((shard_a, key_a),),
                    body=Body.COPY, partner=txid_b)
    b = Transaction(txid=txid_b, kind=TxKind.PAIRED_SUB,
                    reads=((shard_a, key_a),), writes=((shard_b, key_b),),
                    body=Body.COPY, partner=txid_a)
    return a, b


def fill_round(store, params, round, txs_by_author=None, skip=(), parents_from=None):
    """Insert one block per author for a round; parents are all prior-round blocks."""
    txs_by_author = txs_by_author or {}
    if round == 1:
        parents = ()
    else:
        parents = tuple(sorted(parents_from or store.round_blocks(round - 1)))
    made = []
    for a in range(params.n):
        if a in skip:
            continue
        blk = make_block(params, a, round, parents, txs_by_author.get(a, ()))
        store.insert(blk)
        made.append(blk)
    return made


class FakeNet:
    """Query desk stub: authors are alive unless listed as dead."""

    def __init__(self, dead=()):
        self.dead = set(dead)

    def missing_status(self, querier, author, round):
        if (author, round) in self.dead or author in self.dead:
            return DEFINITELY_MISSING
        return POSSIBLY_EXISTS


def build_engine(params, store=None, mode=MODE_EARLY, dead=(), owner=0):
    store = store or BlockStore(params, owner=owner)
    schedule = LeaderSchedule(params)
    book = VoteBook(store, schedule)
    record = LeaderRecord()
    engine = FinalityEngine(owner, params, store, schedule, book, record,
                            ExecLedger(), FakeNet(dead), mode)
    return engine


def feed_engine(engine, blocks):
    for blk in blocks:
        engine.on_block(blk)
