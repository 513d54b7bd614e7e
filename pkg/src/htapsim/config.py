"""Run configuration: defaults, the flat `key = value` config-file format,
and field-level validation.

Sections map to subsystems:

    [workload]     clients, mix, key distribution, plans, duration, mode
    [storage]      chunk geometry and the table schema
    [propagation]  batching bounds
    [hardware]     the modeled hardware (see hwmodel.HardwareConfig)
    [model]        demand-model constants (txn op cost, cache pollution, ...)

Every key has a default; unknown keys raise ConfigError with the offending
section and name.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields

from .errors import ConfigError
from .hwmodel import HardwareConfig
from .storage import TableSchema

MODES = ("shared", "dual_shared", "islands")

DEFAULT_COLUMNS = "key:int64,f0:float64,f1:float64,cat:int64,pad:bytes:64"
DEFAULT_PLAN = "scan table=main where f0>0.2 agg=sum(f0),count()"


@dataclass(frozen=True)
class RunConfig:
    # [workload]
    seed: int = 42
    table_rows: int = 400_000
    key_distribution: str = "zipfian"
    zipf_theta: float = 0.99
    txn_clients: int = 8
    txn_mix_read_only: float = 0.40
    txn_mix_rmw: float = 0.55
    txn_mix_insert: float = 0.05
    ops_per_txn: int = 4
    txn_batch: int = 1
    txn_count: int = 0            # per-client quota; 0 = duration-bound
    analytical_clients: int = 4
    analytical_plans: tuple[str, ...] = (DEFAULT_PLAN,)
    query_count: int = 0          # per-client quota; 0 = duration-bound
    duration: float = 0.05       # modeled seconds
    mode: str = "islands"
    n_groups: int = 8            # cardinality of generated int64 value columns

    # [storage]
    table_name: str = "main"
    columns: str = DEFAULT_COLUMNS
    chunk_count: int = 16
    chunk_capacity: int = 32768

    # [propagation]
    max_records: int = 64
    max_lag: int = 100

    # [hardware]
    hardware: HardwareConfig = field(default_factory=HardwareConfig)

    # [model]
    txn_op_compute: float = 100_000.0   # modeled ops per row read/write
    cache_pollution_factor: float = 0.5  # shared-mode txn hit-rate multiplier
    scheduler_mode: str = "locality_first"
    gc_interval_epochs: int = 50

    def __post_init__(self):
        self.validate()

    @property
    def schema(self) -> TableSchema:
        return parse_schema(self.table_name, self.columns)

    @property
    def quota_mode(self) -> bool:
        return self.txn_count > 0 or self.query_count > 0

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"workload.mode must be one of {MODES}, "
                              f"got {self.mode!r}")
        if self.duration <= 0 and not self.quota_mode:
            raise ConfigError("workload.duration must be > 0")
        mix = (self.txn_mix_read_only, self.txn_mix_rmw, self.txn_mix_insert)
        if any(f < 0 for f in mix) or abs(sum(mix) - 1.0) > 1e-9:
            raise ConfigError(
                f"workload.txn_mix_* must be non-negative and sum to 1, got {mix}")
        if self.key_distribution not in ("uniform", "zipfian"):
            raise ConfigError(
                "workload.key_distribution must be uniform or zipfian")
        if self.key_distribution == "zipfian" and self.zipf_theta <= 0:
            raise ConfigError("workload.zipf_theta must be > 0")
        for name in ("table_rows", "ops_per_txn", "txn_batch", "chunk_count",
                     "chunk_capacity", "max_records", "n_groups"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("txn_clients", "analytical_clients", "txn_count",
                     "query_count", "max_lag", "gc_interval_epochs"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.scheduler_mode not in ("locality_first", "no_steal"):
            raise ConfigError(
                "model.scheduler_mode must be locality_first or no_steal")
        if not 0.0 <= self.cache_pollution_factor <= 1.0:
            raise ConfigError("model.cache_pollution_factor must be in [0,1]")
        if self.txn_op_compute <= 0:
            raise ConfigError("model.txn_op_compute must be > 0")
        if self.analytical_clients > 0 and not self.analytical_plans:
            raise ConfigError(
                "workload.analytical_plans required when analytical_clients > 0")
        try:
            self.schema
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"storage.columns invalid: {exc}") from exc
        from .analytics import parse_plan  # local import avoids a cycle
        from .errors import PlanError
        for text in self.analytical_plans:
            try:
                parse_plan(text)
            except PlanError as exc:
                raise ConfigError(
                    f"workload.analytical_plans: {exc}") from exc

    def replaced(self, **kwargs) -> "RunConfig":
        hw_fields = {f.name for f in fields(HardwareConfig)}
        hw_updates = {k: v for k, v in kwargs.items() if k in hw_fields}
        rest = {k: v for k, v in kwargs.items() if k not in hw_fields}
        if hw_updates:
            rest["hardware"] = dataclasses.replace(self.hardware, **hw_updates)
        return dataclasses.replace(self, **rest)


def parse_schema(table_name: str, columns: str) -> TableSchema:
    """Parse `name:type,...` where type is int64|float64|bytes:N. The first
    int64 column named first acts as the key."""
    cols = []
    for item in columns.split(","):
        item = item.strip()
        if not item:
            continue
        name, _, ctype = item.partition(":")
        if not name or not ctype:
            raise ConfigError(f"bad column spec {item!r}")
        cols.append((name, ctype))
    if not cols:
        raise ConfigError("schema needs at least one column")
    return TableSchema(table_name, tuple(cols), key_column=0)


_SECTION_FIELDS = {
    "workload": ("seed", "table_rows", "key_distribution", "zipf_theta",
                 "txn_clients", "txn_mix_read_only", "txn_mix_rmw",
                 "txn_mix_insert", "ops_per_txn", "txn_batch", "txn_count",
                 "analytical_clients", "analytical_plans", "query_count",
                 "duration", "mode", "n_groups"),
    "storage": ("table_name", "columns", "chunk_count", "chunk_capacity"),
    "propagation": ("max_records", "max_lag"),
    "model": ("txn_op_compute", "cache_pollution_factor", "scheduler_mode",
              "gc_interval_epochs"),
}

_HW_FIELDS = tuple(f.name for f in fields(HardwareConfig))


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Read a config file; every key optional. overrides win over the file."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc

    kwargs: dict = {}
    hw_kwargs: dict = {}
    for section in parser.sections():
        if section == "hardware":
            for key, raw in parser.items(section):
                if key not in _HW_FIELDS:
                    raise ConfigError(f"unknown key hardware.{key}")
                hw_kwargs[key] = _coerce(HardwareConfig, key, raw)
            continue
        if section not in _SECTION_FIELDS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SECTION_FIELDS[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            kwargs[key] = _coerce(RunConfig, key, raw)

    if overrides:
        for key, value in overrides.items():
            if value is None:
                continue
            kwargs[key] = value
    try:
        hardware = HardwareConfig(**hw_kwargs)
    except ValueError as exc:
        raise ConfigError(f"hardware config invalid: {exc}") from exc
    return RunConfig(hardware=hardware, **kwargs)


def _coerce(cls, name: str, raw: str):
    raw = raw.strip()
    if name == "analytical_plans":
        plans = tuple(p.strip() for p in raw.split("|") if p.strip())
        return plans
    ftype = {f.name: f.type for f in fields(cls)}[name]
    try:
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc
