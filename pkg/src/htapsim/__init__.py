"""htapsim: a desk-scale HTAP engine and modeled-hardware simulator.

Transactional and analytical replicas run isolated execution engines; a
propagation pipeline keeps the analytical replica fresh and snapshot
consistent; a deterministic epoch simulator turns every operation's resource
bill into modeled time and energy, so contention and isolation behavior is
reproducible and testable.
"""

from .config import RunConfig, load_config
from .errors import (ConfigError, GapInDeltaStream, HtapError, InvalidDemand,
                     MalformedHistory, OutOfOrderDelta, OutOfOrderInstall,
                     PlanError, SnapshotTooOld, StalledSimulation,
                     TxnNotActive, WriteWriteConflict)
from .harness import (MetricsReport, run, run_functional,
                      run_invariant_suite, run_isolation_suite, sweep,
                      write_metrics_csv)
from .hwmodel import EnergyLedger, HardwareConfig, Simulator, TaskDemand
from .storage import (ColumnStore, RowStore, SnapshotHandle, TableSchema,
                      bulk_load, chunk_scan, snapshot_at)
from .txn import DeltaRecord, TxnEngine, validate_history

__version__ = "0.1.0"

__all__ = [
    "ColumnStore", "ConfigError", "DeltaRecord", "EnergyLedger",
    "GapInDeltaStream", "HardwareConfig", "HtapError", "InvalidDemand",
    "MalformedHistory", "MetricsReport", "OutOfOrderDelta",
    "OutOfOrderInstall", "PlanError", "RowStore", "RunConfig",
    "Simulator", "SnapshotHandle", "SnapshotTooOld", "StalledSimulation",
    "TableSchema", "TaskDemand", "TxnEngine", "TxnNotActive",
    "WriteWriteConflict", "bulk_load", "chunk_scan", "load_config", "run",
    "run_functional", "run_invariant_suite", "run_isolation_suite",
    "snapshot_at", "sweep", "validate_history", "write_metrics_csv",
]
