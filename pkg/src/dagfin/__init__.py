"""dagfin: deterministic DAG-BFT simulator with early transaction finality."""

from .types import (
    Block,
    BlockId,
    Body,
    ConfigError,
    EquivocationError,
    IncompleteViewError,
    Outcome,
    ProtocolParams,
    Transaction,
    TxKind,
)
from .dag import BlockStore, author_in_charge, shard_in_charge, wave_of
from .scenario import Scenario
from .sim import RunArtifacts, Simulation, run_scenario
from .oracle import OracleReport, oracle_check
from .metrics import RunMetrics, collect_metrics

__all__ = [
    "Block", "BlockId", "Body", "BlockStore", "ConfigError", "EquivocationError",
    "IncompleteViewError", "Outcome", "OracleReport", "ProtocolParams",
    "RunArtifacts", "RunMetrics", "Scenario", "Simulation", "Transaction",
    "TxKind", "author_in_charge", "collect_metrics", "oracle_check",
    "run_scenario", "shard_in_charge", "wave_of",
]

__version__ = "0.1.0"
