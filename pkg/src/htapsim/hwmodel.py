"""Deterministic modeled-hardware layer.

Resources: CPU cores, one off-chip link, one internal interconnect, and per
vault a bandwidth lane plus near-data cores. Tasks carry a demand (compute
ops on their assigned core, bytes per vault, link bytes, off-chip bytes); in
each epoch every resource's capacity is divided max-min fairly among the
tasks still demanding it, and all of a task's legs drain concurrently. A task
completes at the end of the epoch in which its last leg reaches zero.

All throughput, latency, and energy numbers are modeled quantities derived
from this epoch loop, never from wall-clock time, so contention and isolation
trends are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import InvalidDemand, StalledSimulation


@dataclass(frozen=True)
class HardwareConfig:
    n_cpu_cores: int = 8
    n_vaults: int = 16
    pim_cores_per_vault: int = 1
    vault_bw: float = 8e9            # bytes/sec per vault
    internal_link_bw: float = 64e9   # bytes/sec, cross-vault interconnect
    offchip_bw: float = 32e9         # bytes/sec, total
    cpu_rate: float = 1e9            # ops/sec per core
    pim_rate: float = 2.5e8          # ops/sec per core (simple in-order)
    energy_offchip: float = 20.0     # pJ/byte
    energy_internal: float = 4.0     # pJ/byte
    energy_cpu_op: float = 100.0     # pJ/op
    energy_pim_op: float = 50.0      # pJ/op
    txn_cache_hit_rate: float = 0.9
    epoch: float = 1e-4              # seconds per simulation epoch

    def __post_init__(self):
        for name in ("n_cpu_cores", "n_vaults", "pim_cores_per_vault",
                     "vault_bw", "internal_link_bw", "offchip_bw",
                     "cpu_rate", "pim_rate", "epoch"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.txn_cache_hit_rate <= 1.0:
            raise ValueError("txn_cache_hit_rate must be in [0,1]")
        if self.pim_rate > self.cpu_rate:
            raise ValueError("pim_rate must not exceed cpu_rate")

    def cpu_core(self, i: int) -> tuple:
        return ("cpu", i % self.n_cpu_cores)

    def pim_core(self, vault: int, j: int = 0) -> tuple:
        return ("pim", vault % self.n_vaults, j % self.pim_cores_per_vault)

    def all_pim_cores(self) -> list[tuple]:
        return [("pim", v, j) for v in range(self.n_vaults)
                for j in range(self.pim_cores_per_vault)]


@dataclass
class TaskDemand:
    compute_ops: float = 0.0
    internal_bytes: dict[int, float] = field(default_factory=dict)
    link_bytes: float = 0.0
    offchip_bytes: float = 0.0

    def validate(self) -> None:
        amounts = [self.compute_ops, self.link_bytes, self.offchip_bytes,
                   *self.internal_bytes.values()]
        for a in amounts:
            if not math.isfinite(a) or a < 0:
                raise InvalidDemand(f"bad demand amount {a!r}")

    def total_internal(self) -> float:
        return sum(self.internal_bytes.values())


class SimTask:
    __slots__ = ("task_id", "core", "source", "demand", "remaining_compute",
                 "remaining_internal", "remaining_link", "remaining_offchip",
                 "submit_time", "finish_time")

    def __init__(self, task_id: int, core: tuple, source: str,
                 demand: TaskDemand, submit_time: float):
        self.task_id = task_id
        self.core = core
        self.source = source
        self.demand = demand
        self.remaining_compute = demand.compute_ops
        self.remaining_internal = {v: b for v, b in demand.internal_bytes.items()
                                   if b > 0}
        self.remaining_link = demand.link_bytes
        self.remaining_offchip = demand.offchip_bytes
        self.submit_time = submit_time
        self.finish_time: float | None = None

    @property
    def done(self) -> bool:
        return (self.remaining_compute <= 0 and self.remaining_link <= 0
                and self.remaining_offchip <= 0
                and not self.remaining_internal)


@dataclass
class EnergyLedger:
    """Accumulated modeled energy per category, in picojoules."""
    offchip: float = 0.0
    internal: float = 0.0
    cpu_compute: float = 0.0
    pim_compute: float = 0.0

    @property
    def total(self) -> float:
        return self.offchip + self.internal + self.cpu_compute + self.pim_compute


@dataclass
class SourceTotals:
    """Serviced amounts attributed to one demand source (txn/analytics/...)."""
    offchip_bytes: float = 0.0
    internal_bytes: float = 0.0   # vault + link bytes
    cpu_ops: float = 0.0
    pim_ops: float = 0.0


def maxmin_allocate(capacity: float, demands: list[tuple[int, float]]) -> dict[int, float]:
    """Split capacity among demanders max-min fairly.

    Water-filling over ascending demand: everyone gets min(demand, share);
    surplus from small demanders is redistributed among the rest. No task can
    receive more without a lesser-allocated task receiving less.
    """
    if not demands:
        return {}
    out: dict[int, float] = {}
    remaining = capacity
    ordered = sorted(demands, key=lambda kv: (kv[1], kv[0]))
    n = len(ordered)
    for i, (tid, amount) in enumerate(ordered):
        share = remaining / (n - i)
        take = amount if amount < share else share
        out[tid] = take
        remaining -= take
    return out


class Simulator:
    """Epoch-stepped processor-sharing simulation of one HardwareConfig."""

    def __init__(self, config: HardwareConfig, trace_service: bool = False):
        self.config = config
        self.now = 0.0
        self._next_task_id = 0
        self.active: dict[int, SimTask] = {}
        self.finished: list[SimTask] = []
        # serviced totals per resource id, for utilization accounting
        self.serviced: dict[tuple, float] = {}
        self.per_source: dict[str, SourceTotals] = {}
        self.service_trace: list[tuple] | None = [] if trace_service else None

    # -- intake ------------------------------------------------------------

    def submit(self, demand: TaskDemand, core: tuple, source: str = "task") -> int:
        demand.validate()
        if core[0] == "cpu":
            if not 0 <= core[1] < self.config.n_cpu_cores:
                raise InvalidDemand(f"no such core {core}")
        elif core[0] == "pim":
            if not (0 <= core[1] < self.config.n_vaults
                    and 0 <= core[2] < self.config.pim_cores_per_vault):
                raise InvalidDemand(f"no such core {core}")
        else:
            raise InvalidDemand(f"unknown core kind {core!r}")
        for vault in demand.internal_bytes:
            if not 0 <= vault < self.config.n_vaults:
                raise InvalidDemand(f"no such vault {vault}")
        task = SimTask(self._next_task_id, core, source, demand, self.now)
        self._next_task_id += 1
        self.active[task.task_id] = task
        if task.done:  # zero-demand task completes immediately
            task.finish_time = self.now
            del self.active[task.task_id]
            self.finished.append(task)
            self._account_completed(task)
        return task.task_id

    # -- stepping ----------------------------------------------------------

    def step_epoch(self, dt: float | None = None) -> list[int]:
        """Advance one epoch; returns ids of tasks completed in it."""
        dt = self.config.epoch if dt is None else dt
        if dt <= 0:
            raise ValueError("epoch must be positive")
        cfg = self.config
        tasks = self.active

        # Gather per-resource demand lists.
        by_core: dict[tuple, list[tuple[int, float]]] = {}
        by_vault: dict[int, list[tuple[int, float]]] = {}
        link: list[tuple[int, float]] = []
        offchip: list[tuple[int, float]] = []
        for tid, task in tasks.items():
            if task.remaining_compute > 0:
                by_core.setdefault(task.core, []).append(
                    (tid, task.remaining_compute))
            for vault, b in task.remaining_internal.items():
                by_vault.setdefault(vault, []).append((tid, b))
            if task.remaining_link > 0:
                link.append((tid, task.remaining_link))
            if task.remaining_offchip > 0:
                offchip.append((tid, task.remaining_offchip))

        progressed = False

        def service(resource, allocs, apply_fn):
            nonlocal progressed
            for tid, amount in allocs.items():
                if amount <= 0:
                    continue
                progressed = True
                apply_fn(tasks[tid], amount)
                self.serviced[resource] = self.serviced.get(resource, 0.0) + amount
                if self.service_trace is not None:
                    self.service_trace.append((self.now, resource, tid, amount))

        for core, demands in by_core.items():
            rate = cfg.cpu_rate if core[0] == "cpu" else cfg.pim_rate
            service(core, maxmin_allocate(rate * dt, demands),
                    _drain_compute)
        for vault, demands in by_vault.items():
            service(("vault", vault),
                    maxmin_allocate(cfg.vault_bw * dt, demands),
                    lambda t, a, v=vault: _drain_internal(t, a, v))
        service(("link",), maxmin_allocate(cfg.internal_link_bw * dt, link),
                _drain_link)
        service(("offchip",), maxmin_allocate(cfg.offchip_bw * dt, offchip),
                _drain_offchip)

        if tasks and not progressed:
            raise StalledSimulation(
                f"{len(tasks)} active tasks but no resource progressed")

        self.now += dt
        completed = []
        for tid in sorted(tasks):
            task = tasks[tid]
            if task.done:
                task.finish_time = self.now
                completed.append(tid)
        for tid in completed:
            task = self.active.pop(tid)
            self.finished.append(task)
            self._account_completed(task)
        return completed

    def run_until_idle(self, dt: float | None = None,
                       max_epochs: int = 10_000_000) -> float:
        """Step until no tasks remain; returns the final modeled time."""
        epochs = 0
        while self.active:
            self.step_epoch(dt)
            epochs += 1
            if epochs >= max_epochs:
                raise StalledSimulation(f"no quiesce within {max_epochs} epochs")
        return self.now

    # -- accounting --------------------------------------------------------

    def _account_completed(self, task: SimTask) -> None:
        # Completed tasks contribute their original (integral) demand, which
        # keeps quiesced-ledger totals exact regardless of epoch splits.
        tot = self.per_source.setdefault(task.source, SourceTotals())
        tot.offchip_bytes += task.demand.offchip_bytes
        tot.internal_bytes += task.demand.total_internal() + task.demand.link_bytes
        if task.core[0] == "cpu":
            tot.cpu_ops += task.demand.compute_ops
        else:
            tot.pim_ops += task.demand.compute_ops

    def source_totals(self) -> dict[str, SourceTotals]:
        """Per-source serviced totals including in-flight partial progress."""
        out = {src: SourceTotals(t.offchip_bytes, t.internal_bytes,
                                 t.cpu_ops, t.pim_ops)
               for src, t in self.per_source.items()}
        for task in self.active.values():
            tot = out.setdefault(task.source, SourceTotals())
            d = task.demand
            tot.offchip_bytes += d.offchip_bytes - task.remaining_offchip
            done_internal = (d.total_internal()
                             - sum(task.remaining_internal.values()))
            tot.internal_bytes += done_internal + (d.link_bytes - task.remaining_link)
            done_ops = d.compute_ops - task.remaining_compute
            if task.core[0] == "cpu":
                tot.cpu_ops += done_ops
            else:
                tot.pim_ops += done_ops
        return out

    def energy_report(self) -> EnergyLedger:
        """Ledger = serviced amount x unit cost, category-wise."""
        cfg = self.config
        offchip = internal = cpu_ops = pim_ops = 0.0
        for tot in self.source_totals().values():
            offchip += tot.offchip_bytes
            internal += tot.internal_bytes
            cpu_ops += tot.cpu_ops
            pim_ops += tot.pim_ops
        return EnergyLedger(
            offchip=offchip * cfg.energy_offchip,
            internal=internal * cfg.energy_internal,
            cpu_compute=cpu_ops * cfg.energy_cpu_op,
            pim_compute=pim_ops * cfg.energy_pim_op,
        )

    def utilization(self, elapsed: float | None = None) -> dict[str, float]:
        """Mean busy fraction per resource class over elapsed modeled time."""
        cfg = self.config
        elapsed = self.now if elapsed is None else elapsed
        if elapsed <= 0:
            return {"cpu": 0.0, "pim": 0.0, "vault": 0.0, "link": 0.0,
                    "offchip": 0.0}
        cpu = sum(v for k, v in self.serviced.items() if k[0] == "cpu")
        pim = sum(v for k, v in self.serviced.items() if k[0] == "pim")
        vault = sum(v for k, v in self.serviced.items() if k[0] == "vault")
        link = self.serviced.get(("link",), 0.0)
        off = self.serviced.get(("offchip",), 0.0)
        n_pim = cfg.n_vaults * cfg.pim_cores_per_vault
        return {
            "cpu": cpu / (cfg.n_cpu_cores * cfg.cpu_rate * elapsed),
            "pim": pim / (n_pim * cfg.pim_rate * elapsed),
            "vault": vault / (cfg.n_vaults * cfg.vault_bw * elapsed),
            "link": link / (cfg.internal_link_bw * elapsed),
            "offchip": off / (cfg.offchip_bw * elapsed),
        }


def _drain_compute(task: SimTask, amount: float) -> None:
    task.remaining_compute = max(0.0, task.remaining_compute - amount)


def _drain_internal(task: SimTask, amount: float, vault: int) -> None:
    left = task.remaining_internal[vault] - amount
    if left <= 1e-12:
        del task.remaining_internal[vault]
    else:
        task.remaining_internal[vault] = left


def _drain_link(task: SimTask, amount: float) -> None:
    task.remaining_link = max(0.0, task.remaining_link - amount)


def _drain_offchip(task: SimTask, amount: float) -> None:
    task.remaining_offchip = max(0.0, task.remaining_offchip - amount)


def solo_finish_time(demand: TaskDemand, config: HardwareConfig,
                     core_kind: str = "cpu") -> float:
    """Closed-form completion time of a task alone in the system: the max
    over its resource legs of demand / capacity."""
    rate = config.cpu_rate if core_kind == "cpu" else config.pim_rate
    legs = [demand.compute_ops / rate,
            demand.link_bytes / config.internal_link_bw,
            demand.offchip_bytes / config.offchip_bw]
    legs.extend(b / config.vault_bw for b in demand.internal_bytes.values())
    return max(legs)
