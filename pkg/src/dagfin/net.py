"""Simulated reliable broadcast under an adversary-controlled schedule.

Broadcast is atomic-with-delay: completing a broadcast schedules one Deliver
event per honest node at ticks chosen by the delay policy, with identical
payloads everywhere (agreement) and guaranteed eventual delivery (totality).
Crashed nodes are silent - the only fault the broadcast layer leaves open.

The event log fully determines a run; feeding it back through ReplaySource
reproduces the run tick for tick.
"""

from __future__ import annotations

import heapq
import json
import random
from dataclasses import dataclass, field
from typing import Optional

from .types import Block, BlockId, ConfigError, ProtocolParams, derive_seed

BROADCAST = "Broadcast"
DELIVER = "Deliver"
ROUND_ADVANCE = "RoundAdvance"
QUERY = "Query"
QUERY_REPLY = "QueryReply"

DEFINITELY_MISSING = "definitely_missing"
POSSIBLY_EXISTS = "possibly_exists"


@dataclass(frozen=True)
class NetEvent:
    seq: int
    tick: int
    kind: str
    src: int
    dst: int
    author: int
    round: int
    info: str = ""

    def to_json(self) -> dict:
        return {"seq": self.seq, "tick": self.tick, "kind": self.kind,
                "src": self.src, "dst": self.dst, "author": self.author,
                "round": self.round, "info": self.info}

    @staticmethod
    def from_json(d: dict) -> "NetEvent":
        return NetEvent(d["seq"], d["tick"], d["kind"], d["src"], d["dst"],
                        d["author"], d["round"], d.get("info", ""))


@dataclass
class AdversarySchedule:
    """Delivery-control knobs for a run.

    policy is one of:
      {"kind": "synchronous"}
      {"kind": "random_delay", "max_ticks": int}
      {"kind": "partition", "groups": [[..], [..]], "lift_tick": int}
      {"kind": "scripted", "delays": {"author,round,dst": tick}, ...}
    """

    seed: int = 0
    crashed: frozenset = frozenset()
    policy: dict = field(default_factory=lambda: {"kind": "synchronous"})

    def validate(self, params: ProtocolParams):
        if len(self.crashed) > params.f:
            raise ConfigError(f"at most f={params.f} crashed nodes allowed")
        kind = self.policy.get("kind")
        if kind not in ("synchronous", "random_delay", "partition", "scripted"):
            raise ConfigError(f"unknown delay policy {kind!r}")
        if kind == "partition":
            seen = set()
            for g in self.policy["groups"]:
                seen.update(g)
            if seen != set(range(params.n)):
                raise ConfigError("partition groups must cover all nodes exactly")


class ReplaySource:
    """Delivery schedule extracted from a previous run's event log."""

    def __init__(self, events: list):
        self.deliver_tick = {}
        self.broadcast_info = {}
        for e in events:
            if e.kind == DELIVER:
                self.deliver_tick[(e.author, e.round, e.dst)] = e.tick
            elif e.kind == BROADCAST:
                self.broadcast_info[(e.author, e.round)] = e.info

    @staticmethod
    def from_file(path) -> "ReplaySource":
        events = []
        with open(path) as fh:
            for line in fh:
                if line.strip():
                    events.append(NetEvent.from_json(json.loads(line)))
        return ReplaySource(events)


class Network:
    """Global event queue, broadcast registry, and missing-block query desk."""

    def __init__(self, params: ProtocolParams, sched: AdversarySchedule,
                 replay: Optional[ReplaySource] = None):
        sched.validate(params)
        self.params = params
        self.sched = sched
        self.replay = replay
        self.seq = 0
        self.log: list[NetEvent] = []
        self.queue: list = []            # heap of (tick, seq, block, dst)
        self.broadcast_blocks: dict[BlockId, Block] = {}
        self._group_of = {}
        if sched.policy.get("kind") == "partition":
            for gi, group in enumerate(sched.policy["groups"]):
                for node in group:
                    self._group_of[node] = gi
        self._query_cache: dict[tuple, str] = {}

    def _emit(self, tick: int, kind: str, src: int, dst: int,
              author: int, round: int, info: str = "") -> NetEvent:
        ev = NetEvent(self.seq, tick, kind, src, dst, author, round, info)
        self.seq += 1
        self.log.append(ev)
        return ev

    def _delay(self, src: int, dst: int, block: Block, tick: int) -> int:
        if self.replay is not None:
            key = (block.id.author, block.id.round, dst)
            if key not in self.replay.deliver_tick:
                raise ConfigError(f"replay log has no delivery for {key}")
            return self.replay.deliver_tick[key]
        if dst == src:
            return tick  # self-delivery is immediate
        kind = self.sched.policy["kind"]
        if kind == "synchronous":
            return tick + 1
        if kind == "random_delay":
            rng = random.Random(derive_seed(
                self.sched.seed, "delay", block.id.author, block.id.round, dst))
            return tick + 1 + rng.randrange(self.sched.policy["max_ticks"] + 1)
        if kind == "partition":
            lift = self.sched.policy["lift_tick"]
            if tick < lift and self._group_of.get(src) != self._group_of.get(dst):
                return max(tick + 1, lift)
            return tick + 1
        # scripted: explicit ticks with a synchronous default
        delays = self.sched.policy.get("delays", {})
        key = f"{block.id.author},{block.id.round},{dst}"
        if key in delays:
            return delays[key]
        return tick + 1

    def broadcast(self, author: int, block: Block, tick: int):
        """Schedule delivery of a block to every honest node."""
        if author in self.sched.crashed:
            return  # silence: a crashed sender produces no events
        if block.id in self.broadcast_blocks:
            raise ConfigError(f"duplicate broadcast for {block.id}")
        self.broadcast_blocks[block.id] = block
        if self.replay is not None:
            want = self.replay.broadcast_info.get((block.id.author, block.id.round))
            if want is not None and want != block.digest():
                raise ConfigError(f"replay divergence: {block.id} digest mismatch")
        self._emit(tick, BROADCAST, author, -1, block.id.author, block.id.round,
                   block.digest())
        for dst in range(self.params.n):
            if dst in self.sched.crashed:
                continue
            at = self._delay(author, dst, block, tick)
            ev = self._emit(at, DELIVER, author, dst, block.id.author, block.id.round)
            heapq.heappush(self.queue, (at, ev.seq, block.id, dst))

    def note_advance(self, node: int, round: int, tick: int):
        self._emit(tick, ROUND_ADVANCE, node, node, node, round)

    def missing_status(self, querier: int, author: int, round: int) -> str:
        """Poll a quorum for the broadcast's vote status.

        Fewer than f+1 positive replies out of 2f+1 means the block can never
        complete its broadcast (crashed author); otherwise it may still turn
        up and the caller should re-query as the view grows.
        """
        key = (author, round)
        if key in self._query_cache:
            return self._query_cache[key]
        responders = [i for i in range(self.params.n)
                      if i not in self.sched.crashed][: self.params.quorum]
        positive = 0
        for r in responders:
            has_broadcast = BlockId(author, round) in self.broadcast_blocks
            alive = author not in self.sched.crashed
            if has_broadcast or alive:
                positive += 1
        verdict = POSSIBLY_EXISTS if positive >= self.params.f + 1 else DEFINITELY_MISSING
        self._emit(0, QUERY, querier, -1, author, round)
        self._emit(0, QUERY_REPLY, -1, querier, author, round,
                   f"{positive}/{len(responders)}:{verdict}")
        if author in self.sched.crashed or verdict == POSSIBLY_EXISTS:
            self._query_cache[key] = verdict  # answer can no longer change
        return verdict

    def pop_tick(self) -> Optional[tuple]:
        """All deliveries of the next tick, in sequence order."""
        if not self.queue:
            return None
        tick = self.queue[0][0]
        batch = []
        while self.queue and self.queue[0][0] == tick:
            _, seq, bid, dst = heapq.heappop(self.queue)
            batch.append((seq, bid, dst))
        return tick, batch

    def dump_events(self, path):
        with open(path, "w") as fh:
            for ev in self.log:
                fh.write(json.dumps(ev.to_json(), sort_keys=True) + "\n")
