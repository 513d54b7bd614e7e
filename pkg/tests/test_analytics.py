from __future__ import annotations

import random

import pytest

from htapsim.analytics import (ChunkTask, QueryPlan, execute, hash_join,
                               parse_plan, place_chunks, schedule)
from htapsim.checks import naive_eval
from htapsim.errors import PlanError
from htapsim.hwmodel import HardwareConfig, Simulator, TaskDemand
from htapsim.propagation import Propagator
from htapsim.storage import ColumnStore, RowStore, TableSchema, bulk_load
from htapsim.txn import DeltaOp, DeltaRecord

SCHEMA = TableSchema("t", (("key", "int64"), ("v", "int64"), ("g", "int64")))


def make_table(rows: dict, chunk_count=4, capacity=256):
    row = RowStore(SCHEMA)
    col = ColumnStore(SCHEMA, chunk_count=chunk_count, chunk_capacity=capacity,
                      n_vaults=4)
    bulk_load(row, col, rows, load_ts=1)
    return row, col


class TestParsePlan:
    def test_full_clause_round_trip(self):
        plan = parse_plan("scan table=orders where amount>100,region=3 "
                          "group_by=region agg=sum(amount),count()")
        assert plan.table == "orders"
        assert plan.predicate == (("amount", ">", 100), ("region", "=", 3))
        assert plan.group_by == ("region",)
        assert plan.aggregates == (("sum", "amount"), ("count", None))

    def test_join_clause(self):
        plan = parse_plan("scan table=a join build=b probe_key=x build_key=key")
        assert plan.join.build_table == "b"
        assert plan.join.probe_key_column == "x"
        assert plan.join.build_key_column == "key"

    @pytest.mark.parametrize("text", [
        "table=a",                       # missing scan
        "scan",                          # missing table
        "scan table=a where",            # empty predicate
        "scan table=a where v~3",        # bad comparator
        "scan table=a agg=median(v)",    # unknown aggregate
        "scan table=a agg=sum()",        # sum needs a column
        "scan table=a agg=count(v)",     # count takes none
        "scan table=a join build=b",     # incomplete join
        "scan table=a nonsense",         # unknown clause
    ])
    def test_rejects_malformed_plans(self, text):
        with pytest.raises(PlanError):
            parse_plan(text)


class TestExecute:
    def test_sum_without_predicate(self):
        _, col = make_table({i: (v, 0) for i, v in enumerate((1, 2, 3))})
        plan = parse_plan("scan table=t agg=sum(v)")
        with col.snapshot_at(1) as handle:
            result, tasks = execute(plan, handle, SCHEMA)
        assert result.rows == (((), (6,)),)
        assert len(tasks) == col.chunk_count

    def test_predicate_selecting_nothing(self):
        _, col = make_table({i: (i, 0) for i in range(5)})
        plan = parse_plan("scan table=t where v>100 agg=sum(v),count()")
        with col.snapshot_at(1) as handle:
            result, _ = execute(plan, handle, SCHEMA)
        assert result.rows == (((), (0, 0)),)

    def test_plain_scan_returns_rows(self):
        rows = {i: (i * 2, 0) for i in range(6)}
        _, col = make_table(rows)
        plan = parse_plan("scan table=t where v>=6")
        with col.snapshot_at(1) as handle:
            result, _ = execute(plan, handle, SCHEMA)
        assert not result.grouped
        assert sorted(result.rows) == [(3, (6, 0)), (4, (8, 0)), (5, (10, 0))]

    def test_group_by_matches_naive_oracle(self):
        """Oracle: row-wise evaluation over the same snapshot image."""
        rng = random.Random(8)
        rows = {k: (rng.randrange(50), rng.randrange(5)) for k in range(200)}
        _, col = make_table(rows)
        plan = parse_plan(
            "scan table=t where v>10 group_by=g agg=sum(v),count(),min(v),"
            "max(v),avg(v)")
        with col.snapshot_at(1) as handle:
            result, _ = execute(plan, handle, SCHEMA)
            image = handle.scan_all()
        expected_rows, grouped = naive_eval(plan, image, SCHEMA)
        assert grouped and result.grouped
        assert result.rows == expected_rows

    def test_unknown_column_rejected(self):
        _, col = make_table({1: (1, 0)})
        with col.snapshot_at(1) as handle:
            with pytest.raises(PlanError):
                execute(parse_plan("scan table=t agg=sum(nope)"), handle, SCHEMA)

    def test_demand_bills_cover_chunk_bytes(self):
        rows = {k: (k, 0) for k in range(100)}
        _, col = make_table(rows)
        plan = parse_plan("scan table=t agg=count()")
        with col.snapshot_at(1) as handle:
            _, tasks = execute(plan, handle, SCHEMA)
        total = sum(t.demand.internal_bytes.get(t.vault_id, 0) for t in tasks)
        assert total == 100 * SCHEMA.row_bytes


class TestSnapshotStability:
    def test_applies_between_chunk_scans_do_not_leak(self):
        rows = {k: (1, 0) for k in range(40)}
        row, col = make_table(rows)
        prop = Propagator(col)
        plan = parse_plan("scan table=t agg=sum(v),count()")
        handle = col.snapshot_at(1)
        # scan half the chunks, mutate every key, scan the rest
        partial = list(handle.scan_chunk(0)) + list(handle.scan_chunk(1))
        ops = tuple(DeltaOp("update", k, (100, 0)) for k in sorted(rows))
        prop.enqueue(DeltaRecord(2, 1, ops))
        prop.drain()
        rest = [kv for cid in (2, 3) for kv in handle.scan_chunk(cid)]
        values = {k: v for k, v in partial + rest}
        assert values == {k: (1, 0) for k in rows}
        result, _ = execute(plan, handle, SCHEMA)
        assert result.rows == (((), (40, 40)),)
        handle.release()
        with col.snapshot_at(2) as fresh:
            new_result, _ = execute(plan, fresh, SCHEMA)
        assert new_result.rows == (((), (4000, 40)),)


class TestPlacement:
    def test_round_robin_examples(self):
        assert place_chunks(4, 2) == {0: 0, 1: 1, 2: 0, 3: 1}
        assert place_chunks(1, 8) == {0: 0}
        spread = place_chunks(64, 16)
        per_vault = [sum(1 for v in spread.values() if v == i)
                     for i in range(16)]
        assert per_vault == [4] * 16

    def test_counts_differ_by_at_most_one(self):
        for chunks, vaults in ((7, 3), (10, 4), (5, 8)):
            placement = place_chunks(chunks, vaults)
            counts = [sum(1 for v in placement.values() if v == i)
                      for i in range(vaults)]
            assert max(counts) - min(counts) <= 1


def compute_task(chunk_id, vault_id, ops=1e6, vault_bytes=1000.0):
    return ChunkTask(chunk_id, vault_id,
                     TaskDemand(compute_ops=ops,
                                internal_bytes={vault_id: vault_bytes}))


class TestSchedule:
    def test_balanced_tasks_need_no_steals(self):
        config = HardwareConfig(n_vaults=4)
        tasks = [compute_task(i, i % 4) for i in range(8)]
        out = schedule(tasks, config, "locality_first")
        assert all(not t.stolen for t in out)
        assert all(t.core == ("pim", t.vault_id, 0) for t in out)

    def test_no_steal_keeps_home_queues(self):
        config = HardwareConfig(n_vaults=4)
        tasks = [compute_task(i, 0) for i in range(6)]
        out = schedule(tasks, config, "no_steal")
        assert {t.core for t in out} == {("pim", 0, 0)}

    def test_cpu_mode_round_robin(self):
        config = HardwareConfig(n_cpu_cores=2)
        tasks = [compute_task(i, 0) for i in range(4)]
        out = schedule(tasks, config, "locality_first", cpu_pool=True)
        assert [t.core for t in out] == [("cpu", 0), ("cpu", 1)] * 2

    def test_skewed_queue_steals_and_beats_no_steal(self):
        """Oracle: simulate both modes, compare modeled completion times."""
        config = HardwareConfig(n_vaults=4, pim_cores_per_vault=2)
        tasks = [compute_task(i, 0, ops=5e4, vault_bytes=8.0)
                 for i in range(12)]
        makespans = {}
        for mode in ("locality_first", "no_steal"):
            out = schedule(tasks, config, mode)
            if mode == "locality_first":
                assert any(t.stolen for t in out)
                # stolen tasks pay a cross-vault transfer on the link
                stolen = [t for t in out if t.stolen]
                assert all(t.demand.link_bytes >= 8.0 for t in stolen)
            else:
                assert all(t.core[1] == 0 for t in out)
            sim = Simulator(config)
            for t in out:
                sim.submit(t.demand, t.core)
            makespans[mode] = sim.run_until_idle(dt=1e-5)
        assert makespans["locality_first"] < makespans["no_steal"]

    def test_assignment_deterministic(self):
        config = HardwareConfig(n_vaults=4)
        tasks = [compute_task(i, i % 2) for i in range(10)]
        a = [(t.chunk_id, t.core) for t in schedule(tasks, config,
                                                    "locality_first")]
        b = [(t.chunk_id, t.core) for t in schedule(tasks, config,
                                                    "locality_first")]
        assert a == b


class TestHashJoin:
    BUILD = TableSchema("b", (("key", "int64"), ("w", "int64")))

    def make_build(self, rows):
        b_row = RowStore(self.BUILD)
        b_col = ColumnStore(self.BUILD, chunk_count=2, chunk_capacity=128,
                            n_vaults=2)
        bulk_load(b_row, b_col, rows, load_ts=1)
        return b_col

    def test_empty_build_side(self):
        _, col = make_table({1: (5, 0)})
        b_col = self.make_build({})
        plan = parse_plan("scan table=t join build=b probe_key=v build_key=key")
        with col.snapshot_at(1) as probe, b_col.snapshot_at(1) as build:
            result = hash_join(plan, probe, SCHEMA, build, self.BUILD)
        assert result.rows == ()

    def test_single_match(self):
        _, col = make_table({1: (5, 0)})
        b_col = self.make_build({5: (50,)})
        plan = parse_plan("scan table=t join build=b probe_key=v build_key=key")
        with col.snapshot_at(1) as probe, b_col.snapshot_at(1) as build:
            result = hash_join(plan, probe, SCHEMA, build, self.BUILD)
        assert result.rows == ((1, 5, 0, 5, 50),)

    def test_random_tables_match_nested_loop_oracle(self):
        """Oracle: brute-force nested loop over both snapshots."""
        rng = random.Random(31)
        probe_rows = {k: (rng.randrange(25), rng.randrange(3))
                      for k in range(50)}
        build_rows = {k: (rng.randrange(100),) for k in
                      rng.sample(range(25), k=12)}
        _, col = make_table(probe_rows)
        b_col = self.make_build(build_rows)
        plan = parse_plan("scan table=t where g!=1 "
                          "join build=b probe_key=v build_key=key")
        with col.snapshot_at(1) as probe, b_col.snapshot_at(1) as build:
            result = hash_join(plan, probe, SCHEMA, build, self.BUILD)
            probe_image = probe.scan_all()
            build_image = build.scan_all()
        expected, grouped = naive_eval(plan, probe_image, SCHEMA,
                                       build_rows=build_image,
                                       build_schema=self.BUILD)
        assert not grouped
        assert sorted(result.rows) == sorted(expected)

    def test_join_aggregate(self):
        _, col = make_table({1: (5, 0), 2: (5, 1), 3: (7, 0)})
        b_col = self.make_build({5: (50,), 7: (70,)})
        plan = parse_plan("scan table=t agg=count() "
                          "join build=b probe_key=v build_key=key")
        with col.snapshot_at(1) as probe, b_col.snapshot_at(1) as build:
            result = hash_join(plan, probe, SCHEMA, build, self.BUILD)
        assert result.rows == (((), (3,)),)

    def test_plan_without_join_rejected(self):
        _, col = make_table({1: (1, 0)})
        with col.snapshot_at(1) as handle:
            with pytest.raises(PlanError):
                hash_join(parse_plan("scan table=t"), handle, SCHEMA)
