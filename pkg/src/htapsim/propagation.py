"""Delta propagation: ships committed updates to the columnar replica.

A single applier drains a FIFO of DeltaRecords in commit order. form_batch
takes a full prefix of max_records (or whatever is queued once the freshness
lag crosses max_lag, or when forced during a drain). Applying a batch builds
a new chunk version set via copy-on-write: only touched chunks are rebuilt,
and inside a rebuilt chunk only the column arrays that actually changed are
copied; everything else is shared with the predecessor set by reference.

The bill for an apply is returned per touched chunk so the harness can charge
it to that chunk's home vault (islands mode) or to shared CPU/off-chip
resources (shared modes).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ChunkCapacityExceeded, GapInDeltaStream, OutOfOrderDelta
from .storage import (ChunkVersionSet, ColumnChunk, ColumnStore, Timestamp)
from .txn import DeltaRecord

# Modeled instruction cost of merging one delta op into a chunk rebuild.
APPLY_OPS_PER_DELTA_OP = 32
# Bytes of metadata (key + validity) accounted per rewritten slot array entry.
SLOT_META_BYTES = 9


@dataclass(frozen=True)
class DeltaBatch:
    deltas: tuple[DeltaRecord, ...]
    min_ts: Timestamp
    max_ts: Timestamp

    def __len__(self) -> int:
        return len(self.deltas)


@dataclass(frozen=True)
class ChunkApplyBill:
    """Resource bill for rebuilding one chunk: bytes moved in that chunk's
    vault (read + write of changed arrays) and merge compute."""
    chunk_id: int
    vault_id: int
    bytes_moved: int
    compute_ops: int


@dataclass(frozen=True)
class PendingApply:
    """A built-but-unpublished version set plus its resource bill."""
    batch: DeltaBatch
    new_set: ChunkVersionSet
    bills: tuple[ChunkApplyBill, ...]

    @property
    def total_bytes(self) -> int:
        return sum(b.bytes_moved for b in self.bills)

    @property
    def total_ops(self) -> int:
        return sum(b.compute_ops for b in self.bills)


@dataclass
class FreshnessState:
    applied_ts: Timestamp
    queue_depth: int


class Propagator:
    """Orders, batches, and applies committed deltas to a ColumnStore."""

    def __init__(self, colstore: ColumnStore, max_records: int = 64,
                 max_lag: int = 100):
        self.colstore = colstore
        self.max_records = max_records
        self.max_lag = max_lag
        self._queue: deque[DeltaRecord] = deque()
        self._last_enqueued_ts: Timestamp = colstore.newest.version_ts
        self.applied_ts: Timestamp = colstore.newest.version_ts
        self.latest_commit_ts: Timestamp = colstore.newest.version_ts
        self.records_applied = 0
        self.batches_applied = 0

    # -- queue -------------------------------------------------------------

    def enqueue(self, delta: DeltaRecord) -> None:
        if delta.commit_ts <= self._last_enqueued_ts:
            raise OutOfOrderDelta(
                f"delta ts={delta.commit_ts} after ts={self._last_enqueued_ts}"
            )
        self._last_enqueued_ts = delta.commit_ts
        self.latest_commit_ts = delta.commit_ts
        self._queue.append(delta)

    @property
    def queue_depth(self) -> int:
        return len(self._queue)

    def freshness_lag(self) -> tuple[int, int]:
        """(timestamp lag, queued record count)."""
        return self.latest_commit_ts - self.applied_ts, len(self._queue)

    def state(self) -> FreshnessState:
        return FreshnessState(self.applied_ts, len(self._queue))

    # -- batching ----------------------------------------------------------

    def form_batch(self, force: bool = False) -> DeltaBatch | None:
        """Take (without popping) the next batch-sized queue prefix.

        A batch forms when a full max_records prefix is available, when the
        timestamp lag has reached max_lag, or when forced (drain). Otherwise
        returns None so small batches are not applied prematurely.
        """
        if not self._queue:
            return None
        lag = self.latest_commit_ts - self.applied_ts
        if len(self._queue) < self.max_records and lag < self.max_lag and not force:
            return None
        deltas = tuple(
            self._queue[i] for i in range(min(self.max_records, len(self._queue)))
        )
        return DeltaBatch(deltas, deltas[0].commit_ts, deltas[-1].commit_ts)

    # -- applying ----------------------------------------------------------

    def prepare(self, batch: DeltaBatch) -> PendingApply:
        """Build the new version set and its bill without publishing it."""
        if not batch.deltas:
            raise GapInDeltaStream("empty batch")
        if not self._queue or self._queue[0] is not batch.deltas[0]:
            raise GapInDeltaStream(
                f"batch starting at ts={batch.min_ts} is not the queue head"
            )
        if batch.min_ts <= self.applied_ts:
            raise GapInDeltaStream(
                f"batch min_ts={batch.min_ts} overlaps applied_ts={self.applied_ts}"
            )

        store = self.colstore
        schema = store.schema
        base = store.newest

        by_chunk: dict[int, list] = {}
        for record in batch.deltas:
            for op in record.ops:
                by_chunk.setdefault(store.chunk_of(op.key), []).append(op)

        new_chunks = list(base.chunks)
        bills = []
        for chunk_id in sorted(by_chunk):
            ops = by_chunk[chunk_id]
            old = base.chunks[chunk_id]
            rebuilt, bytes_moved = _rebuild_chunk(schema, old, ops)
            new_chunks[chunk_id] = rebuilt
            bills.append(ChunkApplyBill(
                chunk_id, old.vault_id, bytes_moved,
                APPLY_OPS_PER_DELTA_OP * len(ops)))

        new_set = ChunkVersionSet(batch.max_ts, tuple(new_chunks), base)
        return PendingApply(batch, new_set, tuple(bills))

    def publish(self, pending: PendingApply) -> None:
        """Atomically install the prepared set and consume its records."""
        self.colstore.publish(pending.new_set)
        for _ in pending.batch.deltas:
            self._queue.popleft()
        self.applied_ts = pending.batch.max_ts
        self.records_applied += len(pending.batch)
        self.batches_applied += 1

    def apply_batch(self, batch: DeltaBatch) -> PendingApply:
        """prepare + publish in one step (the functional path)."""
        pending = self.prepare(batch)
        self.publish(pending)
        return pending

    def run_once(self, force: bool = False) -> PendingApply | None:
        batch = self.form_batch(force=force)
        if batch is None:
            return None
        return self.apply_batch(batch)

    def drain(self) -> int:
        """Apply everything queued; returns batches applied."""
        n = 0
        while self.run_once(force=True) is not None:
            n += 1
        return n


def _rebuild_chunk(schema, old: ColumnChunk, ops) -> tuple[ColumnChunk, int]:
    """Apply ops (in commit order) to one chunk, copy-on-write per column.

    Returns the rebuilt chunk and the bytes moved: read + write of every
    array that differs from the old chunk, plus slot metadata when the key
    or validity arrays changed.
    """
    keys = old.keys
    valid = old.valid.copy()
    vcols = schema.value_columns
    col_arrays = {name: old.columns[name] for name, _ in vcols}
    col_copied = {name: False for name, _ in vcols}
    keys_changed = False
    appended: list[tuple[int, tuple | None]] = []

    def ensure_copy(name):
        if not col_copied[name]:
            col_arrays[name] = col_arrays[name].copy()
            col_copied[name] = True

    for op in ops:
        hits = np.nonzero(keys == op.key)[0]
        slot = int(hits[0]) if len(hits) else -1
        if op.kind == "delete":
            if slot >= 0:
                valid[slot] = False
            else:
                appended = [(k, v) for k, v in appended if k != op.key]
        else:
            if slot >= 0:
                valid[slot] = True
                for vi, (name, _) in enumerate(vcols):
                    ensure_copy(name)
                    col_arrays[name][slot] = op.values[vi]
            else:
                appended = [(k, v) for k, v in appended if k != op.key]
                appended.append((op.key, op.values))

    if appended:
        if len(keys) + len(appended) > old.capacity:
            raise ChunkCapacityExceeded(
                f"chunk {old.chunk_id}: {len(keys) + len(appended)} rows "
                f"exceed capacity {old.capacity}"
            )
        keys_changed = True
        keys = np.concatenate([keys, np.array([k for k, _ in appended],
                                              dtype=np.int64)])
        valid = np.concatenate([valid, np.array([v is not None
                                                 for _, v in appended],
                                                dtype=np.bool_)])
        for vi, (name, ctype) in enumerate(vcols):
            dtype = schema.numpy_dtype(ctype)
            tail = np.array(
                [v[vi] if v is not None else _zero_of(dtype) for _, v in appended],
                dtype=dtype)
            col_arrays[name] = np.concatenate([col_arrays[name], tail])
            col_copied[name] = True

    # Share back any column copy that ended up identical to the original.
    bytes_moved = 0
    final_cols = {}
    for name, ctype in vcols:
        arr = col_arrays[name]
        if col_copied[name] and np.array_equal(arr, old.columns[name]):
            arr = old.columns[name]
        if arr is not old.columns[name]:
            bytes_moved += 2 * arr.nbytes
        final_cols[name] = arr

    if keys_changed or not np.array_equal(valid, old.valid):
        bytes_moved += 2 * len(keys) * SLOT_META_BYTES
    else:
        valid = old.valid

    rebuilt = ColumnChunk(old.chunk_id, old.vault_id, keys, valid,
                          final_cols, old.capacity)
    return rebuilt, bytes_moved


def _zero_of(dtype):
    if dtype == np.int64:
        return 0
    if dtype == np.float64:
        return 0.0
    return b""
