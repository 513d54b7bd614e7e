"""Workload orchestration over the functional engine and the hardware model.

Two drivers share the functional substrate (stores, transaction engine,
propagation, analytical engine):

* run_functional: seeded single-loop interleaving of scripted transactions,
  propagation steps, and analytical probes. No modeled time; this is what the
  correctness suites and the `validate` subcommand use.

* run (timed): closed-loop virtual clients over the epoch simulator. A client
  executes its next unit of work functionally at issue time, bills the
  resulting demand to the hardware model, and issues again when the modeled
  task completes. Execution-mode wiring decides where demands land:

      shared       one replica's worth of hardware: analytics, propagation,
                   and transactions all charge CPU cores + off-chip bandwidth;
                   analytical scans also pollute the transactional cache.
      dual_shared  separate replicas, same shared CPU/off-chip resources.
      islands      transactions keep CPU + off-chip; analytics and propagation
                   run on vault-local cores and internal bandwidth only.

Cores dispatch one task at a time from per-core FIFO queues, so a long scan
in front of a transaction batch delays it (and vice versa); that queueing,
plus max-min sharing of bandwidth among in-flight tasks, is what produces the
interference the isolation suite measures.
"""

from __future__ import annotations

import csv
import io
import random
from collections import deque
from dataclasses import dataclass, field

from . import analytics
from .checks import (chain_violations, convergence_violations, naive_eval,
                     prefix_consistency_violations, replay_state,
                     version_set_violations)
from .config import RunConfig
from .errors import ConfigError, WriteWriteConflict
from .hwmodel import Simulator, TaskDemand
from .propagation import Propagator
from .storage import ColumnStore, RowStore, bulk_load_arrays
from .txn import TxnEngine, validate_history
from .workload import WorkloadGenerator, row_ops_of, txn_script

LOAD_TS = 1
TIMELINE_POINTS = 32

CSV_COLUMNS = (
    "mode", "seed", "cell", "param", "param_value",
    "duration", "makespan",
    "txn_clients", "analytical_clients",
    "txn_commits", "txn_aborts", "txn_throughput",
    "analytical_queries_completed", "analytical_throughput",
    "freshness_lag_ts_mean", "freshness_lag_ts_max",
    "freshness_lag_records_mean", "freshness_lag_records_max",
    "freshness_lag_final",
    "energy_offchip_pj", "energy_internal_pj", "energy_cpu_pj",
    "energy_pim_pj", "energy_total_pj",
    "util_cpu", "util_pim", "util_vault", "util_link", "util_offchip",
    "bytes_offchip_txn", "bytes_offchip_analytics", "bytes_offchip_propagation",
    "bytes_internal_txn", "bytes_internal_analytics",
    "bytes_internal_propagation",
    "ops_cpu_txn", "ops_cpu_analytics", "ops_cpu_propagation",
    "ops_pim_txn", "ops_pim_analytics", "ops_pim_propagation",
    "freshness_timeline",
)


@dataclass
class MetricsReport:
    mode: str
    seed: int
    cell: str = "single"
    param: str = ""
    param_value: str = ""
    duration: float = 0.0
    makespan: float = 0.0
    txn_clients: int = 0
    analytical_clients: int = 0
    txn_commits: int = 0
    txn_aborts: int = 0
    txn_throughput: float = 0.0
    analytical_queries_completed: int = 0
    analytical_throughput: float = 0.0
    freshness_lag_ts_mean: float = 0.0
    freshness_lag_ts_max: int = 0
    freshness_lag_records_mean: float = 0.0
    freshness_lag_records_max: int = 0
    freshness_lag_final: int = 0
    energy_offchip_pj: float = 0.0
    energy_internal_pj: float = 0.0
    energy_cpu_pj: float = 0.0
    energy_pim_pj: float = 0.0
    energy_total_pj: float = 0.0
    util_cpu: float = 0.0
    util_pim: float = 0.0
    util_vault: float = 0.0
    util_link: float = 0.0
    util_offchip: float = 0.0
    bytes_offchip_txn: float = 0.0
    bytes_offchip_analytics: float = 0.0
    bytes_offchip_propagation: float = 0.0
    bytes_internal_txn: float = 0.0
    bytes_internal_analytics: float = 0.0
    bytes_internal_propagation: float = 0.0
    ops_cpu_txn: float = 0.0
    ops_cpu_analytics: float = 0.0
    ops_cpu_propagation: float = 0.0
    ops_pim_txn: float = 0.0
    ops_pim_analytics: float = 0.0
    ops_pim_propagation: float = 0.0
    freshness_timeline: str = ""

    def csv_row(self) -> list[str]:
        return [_fmt(getattr(self, name)) for name in CSV_COLUMNS]

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in CSV_COLUMNS}


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics_csv(reports, path_or_file) -> None:
    """Stable, documented column order; one row per run."""
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for report in reports:
            writer.writerow(report.csv_row())
    finally:
        if own:
            fh.close()


def metrics_csv_text(reports) -> str:
    buf = io.StringIO()
    write_metrics_csv(reports, buf)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Shared system assembly
# ---------------------------------------------------------------------------

@dataclass
class System:
    config: RunConfig
    generator: WorkloadGenerator
    rowstore: RowStore
    colstore: ColumnStore
    engine: TxnEngine
    propagator: Propagator
    _initial_rows: dict | None = None

    @property
    def initial_rows(self) -> dict:
        """Row-shaped initial image, materialized on first oracle use."""
        if self._initial_rows is None:
            self._initial_rows = self.generator.initial_rows()
        return self._initial_rows


def build_system(config: RunConfig, record_history: bool = False,
                 demand_hook=None) -> System:
    schema = config.schema
    generator = WorkloadGenerator(config)
    rowstore = RowStore(schema)
    colstore = ColumnStore(schema, chunk_count=config.chunk_count,
                           chunk_capacity=config.chunk_capacity,
                           n_vaults=config.hardware.n_vaults)
    keys, columns = generator.initial_table()
    bulk_load_arrays(rowstore, colstore, keys, columns, load_ts=LOAD_TS)
    propagator = Propagator(colstore, max_records=config.max_records,
                            max_lag=config.max_lag)
    engine = TxnEngine(rowstore, delta_sink=propagator.enqueue,
                       record_history=record_history, demand_hook=demand_hook)
    return System(config, generator, rowstore, colstore, engine, propagator)


# ---------------------------------------------------------------------------
# Functional driver (no modeled time)
# ---------------------------------------------------------------------------

@dataclass
class FunctionalResult:
    system: System
    history: list | None
    query_checks: list  # (plan_text, floor_ts, engine_result)


def run_functional(config: RunConfig, total_txns: int, n_queries: int = 0,
                   record_history: bool = False,
                   propagate_every: int = 16) -> FunctionalResult:
    """Interleave scripted transactions one operation at a time (seeded),
    with propagation steps and optional analytical probes mixed in."""
    system = build_system(config, record_history=record_history)
    generator = system.generator
    n_clients = max(1, config.txn_clients)
    streams = [generator.txn_stream(c) for c in range(n_clients)]
    quotas = [total_txns // n_clients + (1 if c < total_txns % n_clients else 0)
              for c in range(n_clients)]

    rng = random.Random(f"{config.seed}/functional")
    plans = [analytics.parse_plan(p) for p in config.analytical_plans]
    query_checks = []
    queries_left = n_queries
    est_steps = max(1, total_txns * (2 * config.ops_per_txn + 2))
    query_prob = min(0.05, 3.0 * n_queries / est_steps) if n_queries else 0.0

    scripts: dict[int, list] = {}
    cursor: dict[int, int] = {}
    for c in range(n_clients):
        if quotas[c] > 0:
            scripts[c] = txn_script(next(streams[c]))
            cursor[c] = 0
    handles: dict[int, object] = {}
    steps = 0

    while scripts:
        c = rng.choice(sorted(scripts))
        ops = scripts[c]
        op = ops[cursor[c]]
        cursor[c] += 1
        kind = op[0]
        aborted = False
        if kind == "begin":
            handles[c] = system.engine.begin()
        elif kind == "read":
            system.engine.read(handles[c], op[1])
        elif kind == "write":
            system.engine.write(handles[c], op[1], op[2])
        elif kind == "commit":
            try:
                system.engine.commit(handles[c])
            except WriteWriteConflict:
                aborted = True
        if cursor[c] >= len(ops) or aborted:
            quotas[c] -= 1
            if quotas[c] > 0:
                scripts[c] = txn_script(next(streams[c]))
                cursor[c] = 0
            else:
                del scripts[c]

        steps += 1
        if steps % propagate_every == 0:
            system.propagator.run_once()
        if queries_left and plans and rng.random() < query_prob:
            queries_left -= 1
            query_checks.append(_probe_query(system, rng, plans))

    system.propagator.drain()
    while queries_left and plans:
        queries_left -= 1
        query_checks.append(_probe_query(system, rng, plans))
    return FunctionalResult(system, system.engine.history, query_checks)


def _probe_query(system: System, rng: random.Random, plans):
    plan = plans[rng.randrange(len(plans))]
    with system.colstore.snapshot_at(system.propagator.applied_ts) as handle:
        result, _ = analytics.execute(plan, handle, system.config.schema)
        floor_ts = handle.version_ts
    return (plan, floor_ts, result)


def run_invariant_suite(config: RunConfig, total_txns: int = 2000,
                        n_queries: int = 20) -> list[str]:
    """End-to-end invariant battery; returns violation strings (empty = ok)."""
    result = run_functional(config, total_txns, n_queries=n_queries,
                            record_history=True)
    system = result.system
    problems = []
    problems += chain_violations(system.rowstore)
    problems += version_set_violations(system.colstore)
    problems += convergence_violations(system.rowstore, system.colstore)
    ok, violations = validate_history(result.history, system.initial_rows)
    if not ok:
        problems += [f"history: {v}" for v in violations]
    for plan, floor_ts, result_got in result.query_checks:
        expected_rows, grouped = naive_eval(
            plan, replay_state(system.initial_rows,
                               system.engine.commit_log, floor_ts),
            system.config.schema)
        if result_got.rows != expected_rows or result_got.grouped != grouped:
            problems.append(
                f"query {plan.describe()!r}@{floor_ts} diverges from oracle")
    # delta completeness: installed versions (minus load) == emitted ops
    installed = sorted(
        (v.begin_ts, k) for k, chain in system.rowstore.chains.items()
        for v in chain if v.begin_ts > LOAD_TS)
    emitted = sorted(
        (r.commit_ts, op.key) for r in system.engine.commit_log
        for op in r.ops)
    if installed != emitted:
        problems.append("delta stream does not match installed versions")
    return problems


# ---------------------------------------------------------------------------
# Timed driver (closed-loop clients over the epoch simulator)
# ---------------------------------------------------------------------------

class _Dispatcher:
    """Per-core FIFO queues feeding the simulator one task per core."""

    def __init__(self, sim: Simulator):
        self.sim = sim
        self.queues: dict[tuple, deque] = {}
        self.busy: dict[tuple, int] = {}
        self.tokens: dict[int, tuple] = {}

    def enqueue(self, core: tuple, demand: TaskDemand, source: str, token):
        self.queues.setdefault(core, deque()).append((demand, source, token))

    def fill(self) -> list[int]:
        """Start queued tasks on idle cores; returns ids of tasks that had
        zero demand and completed on submission."""
        instant = []
        for core in sorted(self.queues):
            while core not in self.busy and self.queues[core]:
                demand, source, token = self.queues[core].popleft()
                task_id = self.sim.submit(demand, core, source)
                self.tokens[task_id] = token
                if task_id in self.sim.active:
                    self.busy[core] = task_id
                else:
                    instant.append(task_id)
        return instant

    def complete(self, task_id: int):
        token = self.tokens.pop(task_id)
        for core, tid in self.busy.items():
            if tid == task_id:
                del self.busy[core]
                break
        return token

    def pending(self) -> bool:
        return bool(self.busy) or any(self.queues.values())


class _TxnClient:
    def __init__(self, cid: int, run: "_TimedRun"):
        self.cid = cid
        self.run = run
        self.stream = run.system.generator.txn_stream(cid)
        self.core = run.config.hardware.cpu_core(cid)
        # quota mode fixes total work per client; otherwise duration rules
        self.left = run.config.txn_count if run.config.quota_mode else None
        self.busy = False

    def issue(self):
        run = self.run
        cfg = run.config
        n = cfg.txn_batch if self.left is None else min(cfg.txn_batch, self.left)
        if n <= 0:
            return
        commits = aborts = 0
        row_ops = 0
        for _ in range(n):
            spec = next(self.stream)
            row_ops += row_ops_of(spec)
            handle = run.system.engine.begin()
            try:
                if spec.kind == "read_only":
                    for key in spec.keys:
                        run.system.engine.read(handle, key)
                elif spec.kind == "read_modify_write":
                    for key, values in zip(spec.keys, spec.values):
                        run.system.engine.read(handle, key)
                        run.system.engine.write(handle, key, values)
                else:
                    for key, values in zip(spec.keys, spec.values):
                        run.system.engine.write(handle, key, values)
                run.system.engine.commit(handle)
                commits += 1
            except WriteWriteConflict:
                aborts += 1
        if self.left is not None:
            self.left -= n
        demand = TaskDemand(
            compute_ops=row_ops * cfg.txn_op_compute,
            offchip_bytes=row_ops * run.txn_miss_bytes,
        )
        self.busy = True
        run.dispatcher.enqueue(self.core, demand, "txn",
                               ("txn", self, commits, aborts))

    @property
    def exhausted(self) -> bool:
        return self.left is not None and self.left <= 0


class _Query:
    __slots__ = ("client", "handle", "result", "cells", "tasks_left")

    def __init__(self, client, handle, result, cells, tasks_left):
        self.client = client
        self.handle = handle
        self.result = result
        self.cells = cells
        self.tasks_left = tasks_left


class _AnaClient:
    def __init__(self, cid: int, run: "_TimedRun"):
        self.cid = cid
        self.run = run
        self.plans = run.system.generator.query_stream(cid)
        self.left = run.config.query_count if run.config.quota_mode else None
        self.busy = False

    def issue(self):
        run = self.run
        if self.exhausted:
            return
        plan = analytics.parse_plan(next(self.plans))
        handle = run.system.colstore.snapshot_at(run.system.propagator.applied_ts)
        run.open_handles.add(handle)
        result, tasks = analytics.execute(plan, handle, run.config.schema)
        self.busy = True
        if self.left is not None:
            self.left -= 1
        scheduled = run.wire_analytics(tasks)
        query = _Query(self, handle, result, _result_cells(result),
                       len(scheduled))
        if not scheduled:
            run.finish_query_tasks(query)  # empty table: straight to reduce
            return
        for task in scheduled:
            run.dispatcher.enqueue(task.core, task.demand, "analytics",
                                   ("query_task", query))

    @property
    def exhausted(self) -> bool:
        return self.left is not None and self.left <= 0


def _result_cells(result) -> int:
    """Scalar cells the chunk partials contribute to the final reduce."""
    if result.grouped:
        return max(1, sum(len(k) + len(v) for k, v in result.rows))
    return max(1, len(result.rows))


class _TimedRun:
    def __init__(self, config: RunConfig, cell: str = "single"):
        self.config = config
        self.cell = cell
        self.sim = Simulator(config.hardware)
        self.dispatcher = _Dispatcher(self.sim)
        self.system = build_system(config)
        self.open_handles: set = set()
        hit = config.hardware.txn_cache_hit_rate
        if config.mode == "shared" and config.analytical_clients > 0:
            # single-replica scans evict transactional cache lines
            hit *= config.cache_pollution_factor
        self.txn_miss_bytes = config.schema.row_bytes * (1.0 - hit)
        self.txn_clients = [_TxnClient(c, self) for c in range(config.txn_clients)]
        self.ana_clients = [_AnaClient(c, self)
                            for c in range(config.analytical_clients)]
        self._ana_rr = 0
        self._prop_rr = 0
        self.pending_apply = None
        self.apply_tasks_left = 0
        self.metrics = MetricsReport(
            mode=config.mode, seed=config.seed, cell=cell,
            txn_clients=config.txn_clients,
            analytical_clients=config.analytical_clients)
        self.lag_samples: list[tuple[float, int, int]] = []
        self.issuing = True
        # integer epoch bookkeeping avoids float drift at the window edge
        self.epoch_index = 0
        self.window_epochs = max(1, round(config.duration
                                          / config.hardware.epoch))

    # -- mode wiring -------------------------------------------------------

    def wire_analytics(self, tasks):
        cfg = self.config
        tasks = [t for t in tasks
                 if t.demand.compute_ops or t.demand.total_internal()
                 or t.demand.link_bytes or t.demand.offchip_bytes]
        if cfg.mode == "islands":
            return analytics.schedule(tasks, cfg.hardware, cfg.scheduler_mode)
        out = []
        for task in tasks:
            demand = analytics.rewire_for_cpu(task.demand)
            core = cfg.hardware.cpu_core(self._ana_rr)
            self._ana_rr += 1
            out.append(analytics.ChunkTask(task.chunk_id, task.vault_id,
                                           demand, False, core))
        return out

    def reduce_core(self) -> tuple:
        if self.config.mode == "islands":
            return self.config.hardware.pim_core(0, 0)
        core = self.config.hardware.cpu_core(self._ana_rr)
        self._ana_rr += 1
        return core

    def wire_apply(self, pending):
        """One task per touched chunk, billed to its vault or to CPU."""
        cfg = self.config
        tasks = []
        for bill in pending.bills:
            if cfg.mode == "islands":
                demand = TaskDemand(
                    compute_ops=bill.compute_ops,
                    internal_bytes={bill.vault_id: float(bill.bytes_moved)})
                core = cfg.hardware.pim_core(bill.vault_id, 0)
            else:
                demand = TaskDemand(compute_ops=bill.compute_ops,
                                    offchip_bytes=float(bill.bytes_moved))
                core = cfg.hardware.cpu_core(self._prop_rr)
                self._prop_rr += 1
            tasks.append((core, demand))
        return tasks

    # -- completion handling -------------------------------------------------

    def finish_query_tasks(self, query: _Query):
        demand = analytics.reduce_demand(query.cells)
        if self.config.mode != "islands":
            demand = analytics.rewire_for_cpu(demand)
        self.dispatcher.enqueue(self.reduce_core(), demand,
                                "analytics", ("reduce", query))

    def on_complete(self, token):
        kind = token[0]
        if kind == "txn":
            _, client, commits, aborts = token
            client.busy = False
            if self.counts_in_window():
                self.metrics.txn_commits += commits
                self.metrics.txn_aborts += aborts
        elif kind == "query_task":
            query = token[1]
            query.tasks_left -= 1
            if query.tasks_left == 0:
                self.finish_query_tasks(query)
        elif kind == "reduce":
            query = token[1]
            query.handle.release()
            self.open_handles.discard(query.handle)
            query.client.busy = False
            if self.counts_in_window():
                self.metrics.analytical_queries_completed += 1
        elif kind == "apply_task":
            self.apply_tasks_left -= 1
            if self.apply_tasks_left == 0:
                self.system.propagator.publish(self.pending_apply)
                self.pending_apply = None

    def counts_in_window(self) -> bool:
        return self.config.quota_mode or self.epoch_index <= self.window_epochs

    # -- main loop -----------------------------------------------------------

    def run(self) -> MetricsReport:
        cfg = self.config
        epoch = cfg.hardware.epoch
        max_epochs = 50_000_000
        while True:
            if not cfg.quota_mode and self.epoch_index >= self.window_epochs:
                self.issuing = False
            if cfg.quota_mode:
                if (all(c.exhausted for c in self.txn_clients)
                        and all(c.exhausted for c in self.ana_clients)):
                    self.issuing = False

            if self.issuing:
                for client in self.txn_clients:
                    if not client.busy and not client.exhausted:
                        client.issue()
                for client in self.ana_clients:
                    if not client.busy and not client.exhausted:
                        client.issue()

            # single applier: prepare the next batch when none is in flight
            if self.pending_apply is None:
                force = not self.issuing
                batch = self.system.propagator.form_batch(force=force)
                if batch is not None:
                    pending = self.system.propagator.prepare(batch)
                    self.pending_apply = pending
                    tasks = self.wire_apply(pending)
                    self.apply_tasks_left = len(tasks)
                    if not tasks:
                        self.system.propagator.publish(pending)
                        self.pending_apply = None
                    for core, demand in tasks:
                        self.dispatcher.enqueue(core, demand, "propagation",
                                                ("apply_task",))

            for task_id in self.dispatcher.fill():
                self.on_complete(self.dispatcher.complete(task_id))

            if (not self.dispatcher.pending() and not self.sim.active
                    and not self.issuing and self.pending_apply is None
                    and self.system.propagator.queue_depth == 0):
                break

            completed = self.sim.step_epoch(epoch)
            self.epoch_index += 1
            for task_id in completed:
                token = self.dispatcher.complete(task_id)
                self.on_complete(token)

            lag_ts, lag_records = self.system.propagator.freshness_lag()
            self.lag_samples.append((self.sim.now, lag_ts, lag_records))

            if self.epoch_index % cfg.gc_interval_epochs == 0:
                self._gc()
            if self.epoch_index >= max_epochs:
                raise ConfigError("run exceeded the epoch budget; check config")
        self._gc()
        return self._finalize()

    def _gc(self):
        applied = self.system.propagator.applied_ts
        self.system.colstore.gc(applied)
        floor = min([applied] + [h.version_ts for h in self.open_handles])
        self.system.rowstore.gc(floor)

    def _finalize(self) -> MetricsReport:
        cfg = self.config
        m = self.metrics
        m.makespan = self.sim.now
        window = self.sim.now if cfg.quota_mode else cfg.duration
        m.duration = window
        if window > 0:
            m.txn_throughput = m.txn_commits / window
            m.analytical_throughput = m.analytical_queries_completed / window

        in_window = (self.lag_samples if cfg.quota_mode
                     else self.lag_samples[:self.window_epochs])
        if in_window:
            m.freshness_lag_ts_mean = (
                sum(l for _, l, _ in in_window) / len(in_window))
            m.freshness_lag_ts_max = max(l for _, l, _ in in_window)
            m.freshness_lag_records_mean = (
                sum(r for _, _, r in in_window) / len(in_window))
            m.freshness_lag_records_max = max(r for _, _, r in in_window)
        final_lag, _ = self.system.propagator.freshness_lag()
        m.freshness_lag_final = final_lag
        m.freshness_timeline = _timeline(self.lag_samples)

        ledger = self.sim.energy_report()
        m.energy_offchip_pj = ledger.offchip
        m.energy_internal_pj = ledger.internal
        m.energy_cpu_pj = ledger.cpu_compute
        m.energy_pim_pj = ledger.pim_compute
        m.energy_total_pj = ledger.total

        util = self.sim.utilization()
        m.util_cpu = util["cpu"]
        m.util_pim = util["pim"]
        m.util_vault = util["vault"]
        m.util_link = util["link"]
        m.util_offchip = util["offchip"]

        totals = self.sim.source_totals()
        for source, prefix in (("txn", "txn"), ("analytics", "analytics"),
                               ("propagation", "propagation")):
            tot = totals.get(source)
            if tot is None:
                continue
            setattr(m, f"bytes_offchip_{prefix}", tot.offchip_bytes)
            setattr(m, f"bytes_internal_{prefix}", tot.internal_bytes)
            setattr(m, f"ops_cpu_{prefix}", tot.cpu_ops)
            setattr(m, f"ops_pim_{prefix}", tot.pim_ops)
        return m


def _timeline(samples) -> str:
    """Subsampled `t:lag` pairs, always keeping the final sample."""
    if not samples:
        return ""
    step = max(1, len(samples) // TIMELINE_POINTS)
    picked = samples[::step]
    if picked[-1] != samples[-1]:
        picked.append(samples[-1])
    return ";".join(f"{t:.6f}:{lag}" for t, lag, _ in picked)


def run(config: RunConfig, cell: str = "single") -> MetricsReport:
    """Execute one timed run and return its metrics."""
    return _TimedRun(config, cell=cell).run()


def run_with_artifacts(config: RunConfig, cell: str = "single"):
    """Like run(), but also returns the System for debug exports."""
    timed = _TimedRun(config, cell=cell)
    report = timed.run()
    return report, timed.system


# ---------------------------------------------------------------------------
# Experiment drivers
# ---------------------------------------------------------------------------

def run_isolation_suite(config: RunConfig, modes=None):
    """Per mode: run each side alone and then together; returns
    (reports, retention) where retention[mode] = {txn: r, analytics: r}."""
    modes = tuple(modes) if modes else ("shared", "dual_shared", "islands")
    reports = []
    retention: dict[str, dict[str, float]] = {}
    for mode in modes:
        base = config.replaced(mode=mode)
        txn_alone = run(base.replaced(analytical_clients=0, query_count=0),
                        cell="txn_alone")
        ana_alone = run(base.replaced(txn_clients=0, txn_count=0),
                        cell="analytics_alone")
        both = run(base, cell="both")
        reports += [txn_alone, ana_alone, both]
        retention[mode] = {
            "txn": _ratio(both.txn_throughput, txn_alone.txn_throughput),
            "analytics": _ratio(both.analytical_throughput,
                                ana_alone.analytical_throughput),
        }
    return reports, retention


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def sweep(config: RunConfig, param: str, values) -> list[MetricsReport]:
    """One run per value of a recognized config key (RunConfig or hardware)."""
    from dataclasses import fields as dc_fields
    from .hwmodel import HardwareConfig
    known = ({f.name for f in dc_fields(RunConfig)}
             | {f.name for f in dc_fields(HardwareConfig)})
    if param not in known:
        raise ConfigError(f"unknown sweep parameter {param!r}")
    reports = []
    for value in values:
        cfg = config.replaced(**{param: value})
        report = run(cfg)
        report.param = param
        report.param_value = _fmt(value)
        reports.append(report)
    return reports
