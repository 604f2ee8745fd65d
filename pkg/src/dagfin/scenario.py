"""Scenario schema: everything that defines a run, JSON round-trippable."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Optional

from .finality import MODE_BASELINE, MODE_EARLY, MODE_NAIVE
from .net import AdversarySchedule
from .types import ConfigError, ProtocolParams, derive_seed
from .workload import WorkloadSpec

MODES = (MODE_EARLY, MODE_NAIVE, MODE_BASELINE)


@dataclass
class Scenario:
    n: int = 4
    rounds: int = 24
    mode: str = MODE_EARLY
    seed: int = 0
    v: int = 8
    faults: int = 0
    crashed: Optional[list] = None        # explicit crash set overrides `faults`
    policy: dict = field(default_factory=lambda: {"kind": "synchronous"})
    workload: dict = field(default_factory=dict)
    leader_timeout: int = 50
    coin_seed: Optional[int] = None
    steady_override: Optional[list] = None
    speculation_failure_pct: int = 0

    def validate(self):
        if (self.n - 1) % 3 != 0:
            raise ConfigError("n must be 3f+1 for some integer f")
        f = (self.n - 1) // 3
        if not (0 <= self.faults <= f):
            raise ConfigError(f"faults must lie in 0..{f}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.rounds < 4:
            raise ConfigError("runs need at least one wave")
        if self.crashed is not None and len(self.crashed) > f:
            raise ConfigError("explicit crash set exceeds f")
        WorkloadSpec(self.workload, self.n)

    def build_params(self) -> ProtocolParams:
        f = (self.n - 1) // 3
        coin = self.coin_seed if self.coin_seed is not None \
            else derive_seed(self.seed, "coin")
        override = tuple(self.steady_override) if self.steady_override else None
        return ProtocolParams(n=self.n, f=f, v=self.v, coin_seed=coin,
                              leader_timeout=self.leader_timeout,
                              steady_override=override)

    def build_schedule(self) -> AdversarySchedule:
        if self.crashed is not None:
            crashed = frozenset(self.crashed)
        else:
            rng = random.Random(derive_seed(self.seed, "crash"))
            crashed = frozenset(rng.sample(range(self.n), self.faults))
        return AdversarySchedule(seed=derive_seed(self.seed, "sched"),
                                 crashed=crashed, policy=dict(self.policy))

    def workload_spec(self) -> WorkloadSpec:
        return WorkloadSpec(self.workload, self.n)

    def to_json(self) -> dict:
        return {
            "n": self.n, "rounds": self.rounds, "mode": self.mode,
            "seed": self.seed, "v": self.v, "faults": self.faults,
            "crashed": self.crashed, "policy": self.policy,
            "workload": self.workload, "leader_timeout": self.leader_timeout,
            "coin_seed": self.coin_seed, "steady_override": self.steady_override,
            "speculation_failure_pct": self.speculation_failure_pct,
        }

    @staticmethod
    def from_json(d: dict) -> "Scenario":
        sc = Scenario(**{k: v for k, v in d.items() if k in Scenario.__dataclass_fields__})
        sc.validate()
        return sc

    @staticmethod
    def load(path) -> "Scenario":
        with open(path) as fh:
            return Scenario.from_json(json.load(fh))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
