"""Columnar analytical engine: snapshot-consistent scans, filters, grouped
aggregates, and hash joins, decomposed into per-chunk tasks for placement on
vault-local near-data cores.

Execution is two-phase: chunk tasks produce partial results independently,
then one final reduce merges partials in ascending chunk order (a fixed left
fold, so float aggregates are bit-identical across schedules). Each chunk
task carries the resource bill for scanning its chunk; the scheduler decides
which core runs it and whether its bytes stay vault-local or cross the
internal link (stolen tasks) or the off-chip bus (CPU execution).
"""

from __future__ import annotations

import heapq
import re
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import PlanError
from .hwmodel import HardwareConfig, TaskDemand, solo_finish_time
from .storage import SnapshotHandle, TableSchema

COMPARATORS = ("<=", ">=", "!=", "<", ">", "=")

# Modeled rows processed per compute op (vectorized scan kernels).
ROWS_PER_COMPUTE_OP = 4
# Modeled bytes per partial-aggregate cell shipped to the final reduce.
PARTIAL_CELL_BYTES = 16


@dataclass(frozen=True)
class JoinSpec:
    build_table: str
    probe_key_column: str
    build_key_column: str


@dataclass(frozen=True)
class QueryPlan:
    table: str
    predicate: tuple[tuple[str, str, object], ...] = ()
    group_by: tuple[str, ...] = ()
    aggregates: tuple[tuple[str, str | None], ...] = ()
    join: JoinSpec | None = None

    def describe(self) -> str:
        parts = [f"scan table={self.table}"]
        if self.predicate:
            parts.append("where " + ",".join(
                f"{c}{op}{v}" for c, op, v in self.predicate))
        if self.group_by:
            parts.append("group_by=" + ",".join(self.group_by))
        if self.aggregates:
            parts.append("agg=" + ",".join(
                f"{op}({col or ''})" for op, col in self.aggregates))
        if self.join:
            parts.append(f"join build={self.join.build_table} "
                         f"probe_key={self.join.probe_key_column} "
                         f"build_key={self.join.build_key_column}")
        return " ".join(parts)


@dataclass
class ChunkTask:
    chunk_id: int
    vault_id: int
    demand: TaskDemand
    stolen: bool = False
    core: tuple | None = None


@dataclass(frozen=True)
class QueryResult:
    rows: tuple
    snapshot_ts: int
    grouped: bool

    def as_dict(self) -> dict:
        if not self.grouped:
            raise PlanError("plain scan result has no group keys")
        return {k: v for k, v in self.rows}


def parse_plan(text: str) -> QueryPlan:
    """Parse the textual plan form, e.g.

        scan table=orders where amount>100 group_by=region agg=sum(amount),count()
        scan table=orders join build=items probe_key=item_id build_key=key

    Clauses are whitespace-separated; conjuncts and aggregate terms are
    comma-separated without spaces.
    """
    tokens = text.split()
    if not tokens or tokens[0] != "scan":
        raise PlanError(f"plan must start with 'scan': {text!r}")
    table = None
    predicate = []
    group_by = ()
    aggregates = []
    join_fields = {}
    i = 1
    while i < len(tokens):
        tok = tokens[i]
        if tok.startswith("table="):
            table = tok[len("table="):]
        elif tok == "where":
            i += 1
            if i >= len(tokens):
                raise PlanError("where clause missing conjuncts")
            for term in tokens[i].split(","):
                predicate.append(_parse_conjunct(term))
        elif tok.startswith("group_by="):
            group_by = tuple(c for c in tok[len("group_by="):].split(",") if c)
        elif tok.startswith("agg="):
            for term in tok[len("agg="):].split(","):
                aggregates.append(_parse_aggregate(term))
        elif tok == "join":
            pass
        elif tok.startswith(("build=", "probe_key=", "build_key=")):
            name, value = tok.split("=", 1)
            join_fields[name] = value
        else:
            raise PlanError(f"unknown plan clause {tok!r}")
        i += 1
    if not table:
        raise PlanError(f"plan missing table=: {text!r}")
    join = None
    if join_fields:
        missing = {"build", "probe_key", "build_key"} - set(join_fields)
        if missing:
            raise PlanError(f"join clause missing {sorted(missing)}")
        join = JoinSpec(join_fields["build"], join_fields["probe_key"],
                        join_fields["build_key"])
    return QueryPlan(table, tuple(predicate), group_by, tuple(aggregates), join)


def _parse_conjunct(term: str):
    for op in COMPARATORS:
        if op in term:
            col, raw = term.split(op, 1)
            if not col or not raw:
                raise PlanError(f"bad conjunct {term!r}")
            try:
                value = int(raw)
            except ValueError:
                try:
                    value = float(raw)
                except ValueError:
                    raise PlanError(f"non-numeric constant in {term!r}") from None
            return (col, op, value)
    raise PlanError(f"no comparator in conjunct {term!r}")


def _parse_aggregate(term: str):
    m = re.fullmatch(r"(sum|count|min|max|avg)\(([A-Za-z_0-9]*)\)", term)
    if not m:
        raise PlanError(f"bad aggregate {term!r}")
    op, col = m.group(1), m.group(2)
    if op == "count":
        if col:
            raise PlanError("count() takes no column")
        return (op, None)
    if not col:
        raise PlanError(f"{op}() needs a column")
    return (op, col)


def check_plan(plan: QueryPlan, schema: TableSchema) -> None:
    """Validate column references and types against the schema."""
    names = {name for name, _ in schema.columns}
    numeric = {name for name, ctype in schema.columns
               if ctype in ("int64", "float64")}
    for col, _, _ in plan.predicate:
        if col not in names:
            raise PlanError(f"unknown column {col!r} in predicate")
        if col not in numeric:
            raise PlanError(f"predicate on non-numeric column {col!r}")
    for col in plan.group_by:
        if col not in names:
            raise PlanError(f"unknown group_by column {col!r}")
    for op, col in plan.aggregates:
        if op == "count":
            continue
        if col not in names:
            raise PlanError(f"unknown aggregate column {col!r}")
        if col not in numeric:
            raise PlanError(f"aggregate on non-numeric column {col!r}")
    if plan.join and plan.join.probe_key_column not in names:
        raise PlanError(
            f"unknown probe key column {plan.join.probe_key_column!r}")


# ---------------------------------------------------------------------------
# Placement and scheduling
# ---------------------------------------------------------------------------

def place_chunks(chunk_count: int, vault_count: int) -> dict[int, int]:
    """Round-robin data placement; chunk counts per vault differ by <= 1."""
    if vault_count < 1:
        raise ValueError("vault_count must be >= 1")
    return {cid: cid % vault_count for cid in range(chunk_count)}


def schedule(tasks: list[ChunkTask], config: HardwareConfig, mode: str,
             cpu_pool: bool = False) -> list[ChunkTask]:
    """Assign chunk tasks to cores; deterministic given input order.

    locality_first: tasks queue on their home vault; a core that drains its
    vault queue steals the tail of the longest remaining queue (ties to the
    lowest vault id). Stolen tasks keep their bytes on the home vault but pay
    an extra transfer of the same size over the internal link.
    no_steal: home vault queue only.
    cpu_pool: round-robin over CPU cores regardless of mode; bytes become
    off-chip traffic (done by the caller via rewire_for_cpu).
    """
    if cpu_pool:
        out = []
        for i, task in enumerate(tasks):
            out.append(replace_core(task, config.cpu_core(i), stolen=False))
        return out
    if mode not in ("locality_first", "no_steal"):
        raise ValueError(f"unknown scheduler mode {mode!r}")

    queues: dict[int, list[ChunkTask]] = {v: [] for v in range(config.n_vaults)}
    for task in tasks:
        queues[task.vault_id % config.n_vaults].append(task)

    # Simulated drain with solo durations decides assignment and steals.
    out: list[ChunkTask] = []
    heap: list[tuple[float, int, int, tuple]] = []
    seq = 0
    for v in range(config.n_vaults):
        for j in range(config.pim_cores_per_vault):
            heapq.heappush(heap, (0.0, v, j, ("pim", v, j)))
    while heap:
        free_at, vault, j, core = heapq.heappop(heap)
        task = None
        stolen = False
        if queues[vault]:
            task = queues[vault].pop(0)
        elif mode == "locality_first":
            longest = max(queues, key=lambda v: (len(queues[v]), -v))
            if queues[longest]:
                task = queues[longest].pop()  # steal the tail
                stolen = task.vault_id != vault
        if task is None:
            continue
        task = replace_core(task, core, stolen=stolen)
        out.append(task)
        duration = solo_finish_time(task.demand, config, core_kind="pim")
        seq += 1
        heapq.heappush(heap, (free_at + duration, vault, j, core))
    return out


def replace_core(task: ChunkTask, core: tuple, stolen: bool) -> ChunkTask:
    demand = task.demand
    if stolen:
        extra = demand.total_internal()
        demand = TaskDemand(demand.compute_ops, dict(demand.internal_bytes),
                            demand.link_bytes + extra, demand.offchip_bytes)
    return ChunkTask(task.chunk_id, task.vault_id, demand, stolen, core)


def rewire_for_cpu(demand: TaskDemand) -> TaskDemand:
    """Move all memory traffic of a task to the off-chip bus (CPU modes)."""
    return TaskDemand(
        compute_ops=demand.compute_ops,
        internal_bytes={},
        link_bytes=0.0,
        offchip_bytes=(demand.offchip_bytes + demand.link_bytes
                       + demand.total_internal()),
    )


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

class _Partial:
    """Per-chunk partial result: either plain rows or grouped accumulators."""

    __slots__ = ("rows", "groups", "cells")

    def __init__(self, rows=None, groups=None):
        self.rows = rows
        self.groups = groups  # dict group_key -> list of accumulator tuples
        self.cells = 0


def execute(plan: QueryPlan, handle: SnapshotHandle, schema: TableSchema,
            build_handle: SnapshotHandle | None = None,
            build_schema: TableSchema | None = None):
    """Evaluate a plan over one pinned snapshot.

    Returns (QueryResult, list[ChunkTask]): the tasks carry per-chunk bills
    (bytes on the home vault, compute ops) for the hardware model; the result
    itself comes from merging per-chunk partials in ascending chunk order.
    """
    check_plan(plan, schema)
    build_rows = None
    if plan.join is not None:
        bh = build_handle or handle
        bs = build_schema or schema
        if plan.join.build_key_column not in {n for n, _ in bs.columns}:
            raise PlanError(
                f"unknown build key column {plan.join.build_key_column!r}")
        build_rows = _hash_table(bh, bs, plan.join.build_key_column)

    chunks = handle.version_set.chunks
    tasks: list[ChunkTask] = []
    partials: list[tuple[int, _Partial]] = []
    for chunk in chunks:
        demand = TaskDemand(
            compute_ops=_ceil_div(len(chunk), ROWS_PER_COMPUTE_OP),
            internal_bytes={chunk.vault_id: float(chunk.stored_bytes(schema))},
        )
        if plan.join is not None and len(chunk):
            # probing ships matching build rows over the link
            demand.link_bytes += float(len(chunk) * schema.row_bytes)
        tasks.append(ChunkTask(chunk.chunk_id, chunk.vault_id, demand))
        partial = _eval_chunk(plan, chunk, schema, build_rows,
                              build_schema or schema)
        partials.append((chunk.chunk_id, partial))

    result = _reduce(plan, partials, handle.version_ts)
    return result, tasks


def reduce_demand(partials_cells: int) -> TaskDemand:
    """Bill for the final reduce: merged partial cells cross the link."""
    return TaskDemand(
        compute_ops=max(1, _ceil_div(partials_cells, ROWS_PER_COMPUTE_OP)),
        link_bytes=float(partials_cells * PARTIAL_CELL_BYTES),
    )


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def _chunk_mask(plan: QueryPlan, chunk, schema: TableSchema):
    mask = chunk.valid.copy()
    key_name = schema.columns[schema.key_column][0]
    for col, op, value in plan.predicate:
        if col == key_name:
            arr = chunk.keys
        else:
            arr = chunk.columns[col]
        if op == "<":
            m = arr < value
        elif op == "<=":
            m = arr <= value
        elif op == "=":
            m = arr == value
        elif op == ">=":
            m = arr >= value
        elif op == ">":
            m = arr > value
        else:
            m = arr != value
        mask &= m
    return mask


def _column_values(chunk, schema: TableSchema, name: str, mask):
    key_name = schema.columns[schema.key_column][0]
    arr = chunk.keys if name == key_name else chunk.columns[name]
    return arr[mask]


def _eval_chunk(plan: QueryPlan, chunk, schema, build_rows, build_schema):
    mask = _chunk_mask(plan, chunk, schema)
    if plan.join is None:
        if not plan.aggregates:
            order = np.nonzero(mask)[0]
            rows = [(int(chunk.keys[i]),
                     tuple(_pyval(chunk.columns[n][i], t)
                           for n, t in schema.value_columns))
                    for i in order]
            p = _Partial(rows=rows)
            p.cells = len(rows)
            return p
        if plan.group_by:
            return _grouped_partial(plan, chunk, schema, mask)
        accs = []
        for op, col in plan.aggregates:
            if op == "count":
                accs.append(_CountAcc(int(mask.sum())))
            else:
                accs.append(_make_acc(op, _column_values(chunk, schema, col, mask)))
        p = _Partial(groups={(): accs})
        p.cells = len(accs)
        return p
    return _join_partial(plan, chunk, schema, mask, build_rows, build_schema)


def _grouped_partial(plan, chunk, schema, mask):
    cols = [_column_values(chunk, schema, g, mask) for g in plan.group_by]
    groups: dict[tuple, list] = {}
    if len(cols[0]) == 0:
        return _Partial(groups=groups)
    # Tuple-keyed grouping; per-chunk cardinality keeps this loop cheap.
    key_rows = list(zip(*(c.tolist() for c in cols)))
    agg_inputs = {}
    for op, col in plan.aggregates:
        if op != "count":
            agg_inputs[col] = _column_values(chunk, schema, col, mask)
    index: dict[tuple, list[int]] = {}
    for i, k in enumerate(key_rows):
        index.setdefault(k, []).append(i)
    for k in index:
        rows = index[k]
        accs = []
        for op, col in plan.aggregates:
            if op == "count":
                accs.append(_CountAcc(len(rows)))
            else:
                accs.append(_make_acc(op, agg_inputs[col][rows]))
        groups[k] = accs
    p = _Partial(groups=groups)
    p.cells = len(groups) * max(1, len(plan.aggregates))
    return p


def _join_partial(plan, chunk, schema, mask, build_rows, build_schema):
    probe_key_col = plan.join.probe_key_column
    probe_vals = _column_values(chunk, schema, probe_key_col, mask)
    order = np.nonzero(mask)[0]
    joined = []
    for pos, i in enumerate(order):
        pk = _pyval(probe_vals[pos], "int64")
        matches = build_rows.get(pk, ())
        probe_row = (int(chunk.keys[i]),
                     *(_pyval(chunk.columns[n][i], t)
                       for n, t in schema.value_columns))
        for build_row in matches:
            joined.append(probe_row + build_row)
    if not plan.aggregates:
        p = _Partial(rows=joined)
        p.cells = len(joined)
        return p
    # Aggregates over joined rows reference probe columns only.
    accs = []
    for op, col in plan.aggregates:
        if op == "count":
            accs.append(_CountAcc(len(joined)))
        else:
            ci = _probe_col_offset(schema, col)
            vals = np.array([row[ci] for row in joined], dtype=np.float64)
            accs.append(_make_acc(op, vals))
    p = _Partial(groups={(): accs})
    p.cells = len(accs)
    return p


def _probe_col_offset(schema: TableSchema, name: str) -> int:
    # joined row layout: (key, *values, build_key, *build_values)
    if name == schema.columns[schema.key_column][0]:
        return 0
    for i, (n, _) in enumerate(schema.value_columns):
        if n == name:
            return 1 + i
    raise PlanError(f"unknown column {name!r}")


def _hash_table(handle: SnapshotHandle, schema: TableSchema, key_col: str):
    """Build-side hash map key -> list of (key, *values) rows."""
    table: dict = {}
    key_name = schema.columns[schema.key_column][0]
    idx = None if key_col == key_name else (
        [n for n, _ in schema.value_columns].index(key_col))
    for chunk_id in range(len(handle.version_set.chunks)):
        for key, values in handle.scan_chunk(chunk_id):
            k = key if idx is None else values[idx]
            table.setdefault(k, []).append((key,) + values)
    return table


# -- aggregate accumulators -------------------------------------------------

class _CountAcc:
    op = "count"

    def __init__(self, n):
        self.n = int(n)

    def merge(self, other):
        self.n += other.n

    def finalize(self):
        return self.n


class _SumAcc:
    op = "sum"

    def __init__(self, total, n):
        self.total = total
        self.n = int(n)

    def merge(self, other):
        self.total = self.total + other.total
        self.n += other.n

    def finalize(self):
        return self.total


class _AvgAcc(_SumAcc):
    op = "avg"

    def finalize(self):
        return self.total / self.n if self.n else None


class _MinAcc:
    op = "min"

    def __init__(self, value):
        self.value = value

    def merge(self, other):
        if self.value is None or (other.value is not None
                                  and other.value < self.value):
            self.value = other.value

    def finalize(self):
        return self.value


class _MaxAcc:
    op = "max"

    def __init__(self, value):
        self.value = value

    def merge(self, other):
        if self.value is None or (other.value is not None
                                  and other.value > self.value):
            self.value = other.value

    def finalize(self):
        return self.value


def _make_acc(op, values):
    n = len(values)
    if op == "sum":
        return _SumAcc(_pysum(values), n)
    if op == "avg":
        return _AvgAcc(_pysum(values), n)
    if op == "min":
        return _MinAcc(_pyval(values.min(), None) if n else None)
    if op == "max":
        return _MaxAcc(_pyval(values.max(), None) if n else None)
    raise PlanError(f"unknown aggregate {op!r}")


def _pysum(values):
    if len(values) == 0:
        return 0
    total = values.sum()
    return _pyval(total, None)


def _pyval(v, ctype):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, bytes):
        # numpy S-arrays strip trailing NULs; restore the fixed width
        if ctype and ctype.startswith("bytes:"):
            return v.ljust(int(ctype.split(":", 1)[1]), b"\x00")
        return v
    return v


def _reduce(plan: QueryPlan, partials, snapshot_ts) -> QueryResult:
    """Left fold over partials in ascending chunk id; canonical row order."""
    partials = sorted(partials, key=lambda p: p[0])
    if not plan.aggregates:
        rows: list = []
        for _, p in partials:
            rows.extend(p.rows or [])
        # canonical order: slot order is load-history dependent, key order
        # is not, so plain results sort for comparability across replicas
        rows.sort()
        return QueryResult(tuple(rows), snapshot_ts, grouped=False)

    merged: dict[tuple, list] = {}
    for _, p in partials:
        if p.groups is None:
            continue
        for gkey, accs in p.groups.items():
            if gkey not in merged:
                merged[gkey] = accs
            else:
                for mine, theirs in zip(merged[gkey], accs):
                    mine.merge(theirs)
    if not plan.group_by and () not in merged:
        merged[()] = [_empty_acc(op) for op, _ in plan.aggregates]
    rows = tuple(
        (gkey, tuple(acc.finalize() for acc in merged[gkey]))
        for gkey in sorted(merged)
    )
    return QueryResult(rows, snapshot_ts, grouped=True)


def _empty_acc(op):
    if op == "count":
        return _CountAcc(0)
    if op in ("sum", "avg"):
        return _AvgAcc(0, 0) if op == "avg" else _SumAcc(0, 0)
    return _MinAcc(None) if op == "min" else _MaxAcc(None)


def hash_join(plan: QueryPlan, probe_handle: SnapshotHandle,
              probe_schema: TableSchema,
              build_handle: SnapshotHandle | None = None,
              build_schema: TableSchema | None = None) -> QueryResult:
    """Equi-join entry point; delegates to execute() with the join spec."""
    if plan.join is None:
        raise PlanError("hash_join requires a plan with a join clause")
    result, _ = execute(plan, probe_handle, probe_schema,
                        build_handle=build_handle, build_schema=build_schema)
    return result
