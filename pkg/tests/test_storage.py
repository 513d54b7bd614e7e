from __future__ import annotations

import random

import pytest

from htapsim.checks import chain_violations, version_set_violations
from htapsim.errors import OutOfOrderInstall, SnapshotTooOld
from htapsim.propagation import Propagator
from htapsim.storage import (ChunkVersionSet, ColumnStore, RowStore,
                             TableSchema, bulk_load, chunk_scan)
from htapsim.txn import DeltaOp, DeltaRecord


def chain_with_two_versions(store: RowStore):
    store.install(1, (10,), 5)
    store.install(1, (20,), 15)


class TestRowRead:
    def test_empty_store_not_found(self, tiny_stores):
        row, _ = tiny_stores
        assert row.read(7, 5) is None

    def test_visible_version(self, tiny_stores):
        row, _ = tiny_stores
        chain_with_two_versions(row)
        assert row.read(1, 10) == (10,)

    def test_begin_ts_inclusive(self, tiny_stores):
        row, _ = tiny_stores
        chain_with_two_versions(row)
        assert row.read(1, 15) == (20,)

    def test_before_first_version(self, tiny_stores):
        row, _ = tiny_stores
        chain_with_two_versions(row)
        assert row.read(1, 4) is None

    def test_tombstone_reads_not_found(self, tiny_stores):
        row, _ = tiny_stores
        row.install(3, (1,), 2)
        row.install(3, None, 7)
        assert row.read(3, 6) == (1,)
        assert row.read(3, 7) is None


class TestRowInstall:
    def test_install_into_empty(self, tiny_stores):
        row, _ = tiny_stores
        row.install(1, (10,), 5)
        chain = row.chains[1]
        assert [(v.values, v.begin_ts, v.end_ts) for v in chain] == \
            [((10,), 5, None)]

    def test_install_closes_open_version(self, tiny_stores):
        row, _ = tiny_stores
        chain_with_two_versions(row)
        chain = row.chains[1]
        assert [(v.values, v.begin_ts, v.end_ts) for v in chain] == \
            [((10,), 5, 15), ((20,), 15, None)]

    def test_out_of_order_install(self, tiny_stores):
        row, _ = tiny_stores
        row.install(1, (10,), 5)
        with pytest.raises(OutOfOrderInstall):
            row.install(1, (9,), 3)

    def test_latest_commit_ts_tracks_installs(self, tiny_stores):
        row, _ = tiny_stores
        chain_with_two_versions(row)
        assert row.latest_commit_ts == 15


class TestSnapshots:
    def make_sets(self, col: ColumnStore):
        # version sets at ts 0 (initial), 10, 20
        for ts in (10, 20):
            col.publish(ChunkVersionSet(ts, col.newest.chunks, col.newest))

    def test_floor_rule(self, tiny_stores):
        _, col = tiny_stores
        self.make_sets(col)
        with col.snapshot_at(15) as handle:
            assert handle.version_ts == 10

    def test_fresh_store_pins_empty_set(self, tiny_stores):
        _, col = tiny_stores
        with col.snapshot_at(0) as handle:
            assert handle.version_ts == 0
            assert list(handle.scan_chunk(0)) == []

    def test_snapshot_too_old_after_gc(self, tiny_stores):
        _, col = tiny_stores
        self.make_sets(col)
        assert col.gc(20) == 2
        with pytest.raises(SnapshotTooOld):
            col.snapshot_at(5)

    def test_pin_blocks_gc(self, tiny_stores):
        _, col = tiny_stores
        self.make_sets(col)
        handle = col.snapshot_at(10)
        assert col.gc(20) == 1  # only set@0 reclaimed
        assert handle.version_ts == 10
        assert list(handle.scan_chunk(0)) == []  # still readable
        handle.release()
        assert col.gc(20) == 1  # now set@10 goes too

    def test_gc_watermark_zero_reclaims_nothing(self, tiny_stores):
        _, col = tiny_stores
        self.make_sets(col)
        assert col.gc(0) == 0


class TestChunkScan:
    def load(self, row, col, rows):
        bulk_load(row, col, rows, load_ts=1)

    def test_scan_yields_valid_rows(self, tiny_stores):
        row, col = tiny_stores
        self.load(row, col, {3: (30,), 5: (50,)})
        with col.snapshot_at(1) as handle:
            seen = {k: v for cid in range(col.chunk_count)
                    for k, v in chunk_scan(handle, cid)}
        assert seen == {3: (30,), 5: (50,)}

    def test_invalid_slots_are_skipped(self, tiny_stores):
        row, col = tiny_stores
        self.load(row, col, {3: (30,), 5: (50,)})
        prop = Propagator(col)
        prop.enqueue(DeltaRecord(2, 1, (DeltaOp("delete", 5, None),)))
        prop.drain()
        with col.snapshot_at(2) as handle:
            seen = [k for cid in range(col.chunk_count)
                    for k, _ in chunk_scan(handle, cid)]
        assert seen == [3]

    def test_empty_chunk_empty_iterator(self, tiny_stores):
        _, col = tiny_stores
        with col.snapshot_at(0) as handle:
            assert list(chunk_scan(handle, 1)) == []


class TestBaseImage:
    def test_reads_fall_through_to_base(self, tiny_stores):
        row, col = tiny_stores
        bulk_load(row, col, {1: (11,), 2: (22,)}, load_ts=1)
        assert row.read(1, 1) == (11,)
        assert row.read(1, 0) is None  # before load
        assert row.read(9, 5) is None

    def test_install_over_base_closes_base_version(self, tiny_stores):
        row, col = tiny_stores
        bulk_load(row, col, {1: (11,)}, load_ts=1)
        row.install(1, (99,), 7)
        assert row.read(1, 6) == (11,)
        assert row.read(1, 7) == (99,)
        assert chain_violations(row) == []

    def test_visible_state_merges_base_and_chains(self, tiny_stores):
        row, col = tiny_stores
        bulk_load(row, col, {1: (11,), 2: (22,)}, load_ts=1)
        row.install(2, None, 5)   # delete key 2
        row.install(3, (33,), 6)  # brand new key
        assert row.visible_state(row.latest_commit_ts) == {1: (11,), 3: (33,)}


class TestRowGc:
    def test_drops_closed_versions_below_watermark(self, tiny_stores):
        row, _ = tiny_stores
        chain_with_two_versions(row)  # [5,15) and [15,inf)
        assert row.gc(15) == 1
        assert [v.begin_ts for v in row.chains[1]] == [15]
        assert row.read(1, 20) == (20,)


class TestBytesColumns:
    def test_fixed_width_round_trip(self):
        schema = TableSchema("t", (("key", "int64"), ("b", "bytes:4")))
        row = RowStore(schema)
        col = ColumnStore(schema, chunk_count=2, chunk_capacity=8, n_vaults=2)
        bulk_load(row, col, {1: (b"ab",)}, load_ts=1)
        padded = b"ab\x00\x00"
        assert row.read(1, 1) == (padded,)
        with col.snapshot_at(1) as handle:
            assert handle.scan_all() == {1: (padded,)}

    def test_too_wide_value_rejected(self):
        schema = TableSchema("t", (("key", "int64"), ("b", "bytes:2")))
        with pytest.raises(ValueError):
            schema.normalize_values((b"toolong",))


class TestDebugDump:
    def test_jsonl_dump_lists_every_version(self, tiny_stores, tmp_path):
        import json
        row, col = tiny_stores
        bulk_load(row, col, {1: (11,)}, load_ts=1)
        row.install(2, (22,), 3)
        row.install(2, (23,), 4)
        path = tmp_path / "rows.jsonl"
        row.dump_jsonl(path)
        lines = [json.loads(l) for l in path.read_text().splitlines()]
        assert lines == [
            {"key": 1, "values": [11], "begin_ts": 1, "end_ts": None},
            {"key": 2, "values": [22], "begin_ts": 3, "end_ts": 4},
            {"key": 2, "values": [23], "begin_ts": 4, "end_ts": None},
        ]


class TestRandomizedInvariants:
    def test_chains_stay_disjoint_and_ordered(self, tiny_stores):
        row, _ = tiny_stores
        rng = random.Random(1234)
        ts = 1
        for _ in range(3000):
            key = rng.randrange(20)
            if rng.random() < 0.1:
                row.install(key, None, ts)
            else:
                row.install(key, (rng.randrange(100),), ts)
            ts += 1
        assert chain_violations(row) == []
        # at most one visible version per (key, ts): probe random points
        for _ in range(500):
            key, probe = rng.randrange(20), rng.randrange(1, ts)
            visible = [v for v in row.chains.get(key, ())
                       if v.begin_ts <= probe
                       and (v.end_ts is None or probe < v.end_ts)]
            assert len(visible) <= 1

    def test_version_sets_strictly_increase(self, tiny_stores):
        row, col = tiny_stores
        bulk_load(row, col, {k: (k,) for k in range(8)}, load_ts=1)
        prop = Propagator(col, max_records=4)
        rng = random.Random(99)
        ts = 2
        for _ in range(50):
            ops = (DeltaOp("update", rng.randrange(8), (rng.randrange(50),)),)
            prop.enqueue(DeltaRecord(ts, ts, ops))
            ts += 1
            if rng.random() < 0.4:
                prop.run_once()
        prop.drain()
        assert version_set_violations(col) == []
