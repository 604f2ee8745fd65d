"""Domain types: protocol parameters, blocks, transactions, outcomes.

All values in the key-value store are unsigned 64-bit integers with
wrapping arithmetic; JSON serialization renders them as decimal strings
so round-trips stay exact.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Optional

MASK64 = (1 << 64) - 1


class ConfigError(ValueError):
    """Raised for invalid protocol parameters or scenario configs."""


class IncompleteViewError(RuntimeError):
    """Raised when an operation needs a block the local view does not hold."""


class EquivocationError(RuntimeError):
    """Two different payloads for one (author, round) slot.

    Structurally impossible under the simulated reliable broadcast; if it
    fires, the harness itself is broken.
    """


def derive_seed(seed: int, *tags) -> int:
    """Derive a stable child seed from a root seed and a tag path.

    Uses sha256 rather than hash() so results do not depend on
    PYTHONHASHSEED and are identical across worker processes.
    """
    material = ":".join([str(seed)] + [str(t) for t in tags])
    digest = hashlib.sha256(material.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & ((1 << 63) - 1)


@dataclass(frozen=True)
class ProtocolParams:
    """Static protocol parameters shared by every node in a run.

    n and f obey n = 3f + 1; the shard count equals n so that exactly one
    node is in charge of each shard per round. v is the look-back constant
    used for the watermark; coin_seed drives both the fallback coin and the
    randomized steady-leader schedule.
    """

    n: int
    f: int
    v: int = 8
    coin_seed: int = 0
    shard_count: int = 0
    leader_timeout: int = 50
    steady_override: Optional[tuple] = None  # scripted steady authors, per odd round

    def __post_init__(self):
        if self.f < 0:
            raise ConfigError("f must be >= 0")
        if self.n != 3 * self.f + 1:
            raise ConfigError(f"n must equal 3f+1, got n={self.n} f={self.f}")
        if self.v < 1:
            raise ConfigError("look-back v must be >= 1")
        if self.shard_count == 0:
            object.__setattr__(self, "shard_count", self.n)
        if self.shard_count != self.n:
            raise ConfigError("shard_count must equal n")

    @property
    def quorum(self) -> int:
        return 2 * self.f + 1


class BlockId(NamedTuple):
    """Identity of a block: at most one per (author, round) in any honest view."""

    author: int
    round: int

    def __str__(self):
        return f"b{self.author}r{self.round}"


class TxKind(str, Enum):
    LOCAL = "local"            # reads and writes within the block's own shard
    CROSS_READ = "cross_read"  # writes own shard, reads one key of one other shard
    PAIRED_SUB = "paired_sub"  # half of an atomic cross-shard pair


class Body(str, Enum):
    """Read-modify-write function applied by the execution engine."""

    PUT = "put"            # write the constant
    COPY = "copy"          # write the value read
    ADD = "add"            # write (value read + constant) mod 2^64


Key = tuple  # (shard, key-within-shard)


@dataclass(frozen=True)
class Transaction:
    txid: str
    kind: TxKind
    reads: tuple          # tuple of Key
    writes: tuple         # tuple of Key
    body: Body
    const: int = 0
    partner: Optional[str] = None          # PAIRED_SUB only
    condition: Optional[tuple] = None      # (predecessor txid, expected write value)

    def validate(self):
        if not self.writes:
            raise ConfigError(f"{self.txid}: transaction must write at least one key")
        write_shards = {k[0] for k in self.writes}
        if len(write_shards) != 1:
            raise ConfigError(f"{self.txid}: writes must target a single shard")
        home = next(iter(write_shards))
        foreign = [k for k in self.reads if k[0] != home]
        if self.kind == TxKind.LOCAL:
            if foreign:
                raise ConfigError(f"{self.txid}: local transaction reads a foreign shard")
        elif self.kind == TxKind.CROSS_READ:
            if len(foreign) != 1 or len(self.reads) != len(foreign):
                raise ConfigError(
                    f"{self.txid}: cross-read transaction must read exactly one foreign key"
                )
        elif self.kind == TxKind.PAIRED_SUB:
            if self.partner is None:
                raise ConfigError(f"{self.txid}: paired sub-transaction needs a partner")
        if self.body in (Body.COPY, Body.ADD) and not self.reads:
            raise ConfigError(f"{self.txid}: {self.body.value} body needs a read key")

    @property
    def home_shard(self) -> int:
        return self.writes[0][0]

    def touched(self) -> frozenset:
        return frozenset(self.reads) | frozenset(self.writes)


@dataclass(frozen=True)
class Block:
    """A delivered reliable-broadcast message: one vertex of the DAG."""

    id: BlockId
    shard: int
    parents: tuple        # tuple of BlockId, all from round - 1
    txs: tuple            # tuple of Transaction

    def digest(self) -> str:
        return hashlib.sha256(canonical_json(block_to_json(self)).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Outcome:
    """Execution result of one transaction; equality is structural and total."""

    txid: str
    reads_seen: tuple     # tuple of (Key, value)
    writes_applied: tuple  # tuple of (Key, value)
    aborted: bool = False

    def write_value(self) -> Optional[int]:
        return self.writes_applied[0][1] if self.writes_applied else None


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def key_to_json(k: Key) -> str:
    return f"{k[0]}/{k[1]}"


def key_from_json(s: str) -> Key:
    a, b = s.split("/")
    return (int(a), int(b))


def tx_to_json(tx: Transaction) -> dict:
    d = {
        "txid": tx.txid,
        "kind": tx.kind.value,
        "reads": [key_to_json(k) for k in tx.reads],
        "writes": [key_to_json(k) for k in tx.writes],
        "body": tx.body.value,
        "const": str(tx.const & MASK64),
    }
    if tx.partner is not None:
        d["partner"] = tx.partner
    if tx.condition is not None:
        d["condition"] = {"txid": tx.condition[0], "expect": str(tx.condition[1] & MASK64)}
    return d


def tx_from_json(d: dict) -> Transaction:
    cond = None
    if "condition" in d:
        cond = (d["condition"]["txid"], int(d["condition"]["expect"]))
    return Transaction(
        txid=d["txid"],
        kind=TxKind(d["kind"]),
        reads=tuple(key_from_json(k) for k in d["reads"]),
        writes=tuple(key_from_json(k) for k in d["writes"]),
        body=Body(d["body"]),
        const=int(d["const"]),
        partner=d.get("partner"),
        condition=cond,
    )


def block_to_json(b: Block) -> dict:
    return {
        "author": b.id.author,
        "round": b.id.round,
        "shard": b.shard,
        "parents": [[p.author, p.round] for p in sorted(b.parents)],
        "txs": [tx_to_json(t) for t in b.txs],
    }


def block_from_json(d: dict) -> Block:
    return Block(
        id=BlockId(d["author"], d["round"]),
        shard=d["shard"],
        parents=tuple(BlockId(a, r) for a, r in d["parents"]),
        txs=tuple(tx_from_json(t) for t in d["txs"]),
    )


def outcome_to_json(o: Outcome) -> dict:
    return {
        "txid": o.txid,
        "reads": [[key_to_json(k), str(v & MASK64)] for k, v in o.reads_seen],
        "writes": [[key_to_json(k), str(v & MASK64)] for k, v in o.writes_applied],
        "aborted": o.aborted,
    }


def outcome_from_json(d: dict) -> Outcome:
    return Outcome(
        txid=d["txid"],
        reads_seen=tuple((key_from_json(k), int(v)) for k, v in d["reads"]),
        writes_applied=tuple((key_from_json(k), int(v)) for k, v in d["writes"]),
        aborted=d["aborted"],
    )
