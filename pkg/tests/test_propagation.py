from __future__ import annotations

import random

import pytest

from htapsim.checks import prefix_consistency_violations, replay_state
from htapsim.errors import GapInDeltaStream, OutOfOrderDelta
from htapsim.propagation import Propagator
from htapsim.storage import ColumnStore, RowStore, bulk_load
from htapsim.txn import DeltaOp, DeltaRecord


def record(ts, *ops):
    return DeltaRecord(ts, ts, tuple(ops))


def upd(key, value):
    return DeltaOp("update", key, (value,))


def ins(key, value):
    return DeltaOp("insert", key, (value,))


def dele(key):
    return DeltaOp("delete", key, None)


@pytest.fixture
def loaded(tiny_stores):
    row, col = tiny_stores
    bulk_load(row, col, {k: (k * 10,) for k in range(6)}, load_ts=1)
    return row, col, Propagator(col, max_records=4, max_lag=100)


class TestEnqueue:
    def test_fifo_depth(self, loaded):
        _, _, prop = loaded
        prop.enqueue(record(2, ins(10, 1)))
        prop.enqueue(record(3, ins(11, 1)))
        assert prop.queue_depth == 2

    def test_out_of_order_rejected(self, loaded):
        _, _, prop = loaded
        prop.enqueue(record(3, ins(10, 1)))
        with pytest.raises(OutOfOrderDelta):
            prop.enqueue(record(2, ins(11, 1)))

    def test_drain_empties_queue(self, loaded):
        _, _, prop = loaded
        prop.enqueue(record(2, ins(10, 1)))
        prop.drain()
        assert prop.queue_depth == 0


class TestFormBatch:
    def test_prefix_capped_at_max_records(self, loaded):
        _, _, prop = loaded
        for ts in (2, 3, 4, 5, 6):
            prop.enqueue(record(ts, upd(1, ts)))
        batch = prop.form_batch()
        assert [d.commit_ts for d in batch.deltas] == [2, 3, 4, 5]

    def test_empty_queue_returns_none(self, loaded):
        _, _, prop = loaded
        assert prop.form_batch() is None
        assert prop.form_batch(force=True) is None

    def test_below_max_without_pressure_waits(self, loaded):
        _, _, prop = loaded
        prop.enqueue(record(2, upd(1, 1)))
        assert prop.form_batch() is None

    def test_lag_forces_partial_batch(self, tiny_stores):
        row, col = tiny_stores
        bulk_load(row, col, {1: (1,)}, load_ts=1)
        prop = Propagator(col, max_records=64, max_lag=3)
        prop.enqueue(record(5, upd(1, 7)))  # lag = 5 - 1 >= 3
        batch = prop.form_batch()
        assert batch is not None and len(batch) == 1

    def test_force_flushes_partial_batch(self, loaded):
        _, _, prop = loaded
        prop.enqueue(record(2, upd(1, 7)))
        assert prop.form_batch(force=True) is not None


class TestApply:
    def test_insert_into_empty_store(self, tiny_stores):
        row, col = tiny_stores
        prop = Propagator(col)
        prop.enqueue(record(1, ins(5, 10)))
        prop.drain()
        with col.snapshot_at(1) as handle:
            assert handle.scan_all() == {5: (10,)}

    def test_update_visible_only_from_its_version(self, loaded):
        """Oracle: replay the commit log to each ts and compare full scans."""
        row, col, prop = loaded
        log = [record(12, upd(3, 7))]
        prop.enqueue(log[0])
        prop.drain()
        initial = {k: (k * 10,) for k in range(6)}
        for ts in (11, 12):
            with col.snapshot_at(ts) as handle:
                assert handle.scan_all() == replay_state(initial, log, ts)

    def test_delete_respects_copy_on_write(self, loaded):
        row, col, prop = loaded
        old = col.snapshot_at(1)
        prop.enqueue(record(2, dele(3)))
        prop.drain()
        with col.snapshot_at(2) as new:
            assert 3 not in new.scan_all()
        assert old.scan_all()[3] == (30,)  # prior snapshot unaffected
        old.release()

    def test_gap_in_stream_rejected(self, loaded):
        _, _, prop = loaded
        prop.enqueue(record(2, upd(1, 1)))
        batch = prop.form_batch(force=True)
        prop.apply_batch(batch)
        with pytest.raises(GapInDeltaStream):
            prop.apply_batch(batch)  # no longer the queue head

    def test_applied_ts_is_batch_max(self, loaded):
        _, _, prop = loaded
        for ts in (2, 3, 4, 5):
            prop.enqueue(record(ts, upd(1, ts)))
        prop.run_once()
        assert prop.applied_ts == 5


class TestSharing:
    def test_untouched_chunks_shared_by_reference(self, loaded):
        row, col, prop = loaded
        before = col.newest
        prop.enqueue(record(2, upd(3, 7)))
        prop.drain()
        after = col.newest
        touched = col.chunk_of(3)
        for cid in range(col.chunk_count):
            if cid == touched:
                assert after.chunks[cid] is not before.chunks[cid]
            else:
                assert after.chunks[cid] is before.chunks[cid]

    def test_unchanged_columns_shared_inside_rewritten_chunk(self, tiny_schema):
        from htapsim.storage import TableSchema
        schema = TableSchema("t", (("key", "int64"), ("a", "int64"),
                                   ("b", "int64")))
        row = RowStore(schema)
        col = ColumnStore(schema, chunk_count=1, chunk_capacity=16, n_vaults=1)
        bulk_load(row, col, {k: (k, 5) for k in range(4)}, load_ts=1)
        before = col.newest.chunks[0]
        prop = Propagator(col)
        # rewrite with column b unchanged
        prop.enqueue(record(2, DeltaOp("update", 2, (99, 5))))
        prop.drain()
        after = col.newest.chunks[0]
        assert after.columns["a"] is not before.columns["a"]
        assert after.columns["b"] is before.columns["b"]
        assert after.keys is before.keys

    def test_bill_covers_only_changed_arrays(self, tiny_schema):
        row = RowStore(tiny_schema)
        col = ColumnStore(tiny_schema, chunk_count=1, chunk_capacity=16,
                          n_vaults=1)
        bulk_load(row, col, {k: (k,) for k in range(4)}, load_ts=1)
        prop = Propagator(col)
        prop.enqueue(record(2, upd(1, 50)))
        pending = prop.run_once(force=True)
        (bill,) = pending.bills
        # one rewritten int64 column of 4 rows, read + write
        assert bill.bytes_moved == 2 * 4 * 8
        assert bill.vault_id == col.newest.chunks[0].vault_id


class TestFreshness:
    def test_quiesced_and_drained_is_zero(self, loaded):
        _, _, prop = loaded
        assert prop.freshness_lag() == (0, 0)

    def test_enqueued_but_unapplied_counts(self, loaded):
        _, _, prop = loaded
        for ts in (2, 3, 4):
            prop.enqueue(record(ts, upd(1, ts)))
        assert prop.freshness_lag() == (3, 3)

    def test_lag_returns_to_zero_after_drain(self, loaded):
        _, _, prop = loaded
        for ts in (2, 3, 4):
            prop.enqueue(record(ts, upd(1, ts)))
        prop.drain()
        assert prop.freshness_lag() == (0, 0)


class TestExactlyOnceAndPrefixConsistency:
    def test_randomized_stream_matches_replay_oracle(self, tiny_stores):
        row, col = tiny_stores
        initial = {k: (k,) for k in range(12)}
        bulk_load(row, col, initial, load_ts=1)
        prop = Propagator(col, max_records=8, max_lag=50)
        rng = random.Random(42)
        log = []
        applied_ops = 0
        for ts in range(2, 1202):
            kind = rng.random()
            key = rng.randrange(16)
            if kind < 0.15:
                op = dele(key)
            elif kind < 0.5:
                op = ins(key, rng.randrange(1000))
            else:
                op = upd(key, rng.randrange(1000))
            rec = record(ts, op)
            log.append(rec)
            prop.enqueue(rec)
            if rng.random() < 0.2:
                prop.run_once()
        prop.drain()
        # exactly-once: every record applied once
        assert prop.records_applied == len(log)
        assert prefix_consistency_violations(
            initial, log, col,
            sample_ts=[1, 2, 50, 333, 600, 887, 1201]) == []
        # full-stream equality at the end
        with col.snapshot_at(1201) as handle:
            assert handle.scan_all() == replay_state(initial, log, 1201)
