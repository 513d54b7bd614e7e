"""Dual-replica storage: a multi-versioned row store for transactions and a
chunked, versioned column store for analytics.

The row store keeps per-key version chains with [begin_ts, end_ts) validity
intervals; deletes install tombstones so chains stay append-only. The column
store is a linear chain of immutable ChunkVersionSets; applying a delta batch
produces a new set that shares every untouched chunk (and, inside rewritten
chunks, every unchanged column array) with its predecessor. Readers pin a set
through a SnapshotHandle, which blocks garbage collection of that set.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import ChunkCapacityExceeded, OutOfOrderInstall, SnapshotTooOld

Timestamp = int

# Reserved "initial/empty" timestamp.
TS_ZERO: Timestamp = 0

# Tombstone marker for deleted rows: a version whose values are None.
TOMBSTONE = None


def mix64(x: int) -> int:
    """splitmix64 finalizer; deterministic across processes, unlike hash()."""
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


def mix64_array(keys) -> "np.ndarray":
    """Vectorized splitmix64 over an int64 key array."""
    x = keys.astype(np.uint64)
    with np.errstate(over="ignore"):
        x = x + np.uint64(0x9E3779B97F4A7C15)
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def chunk_of_key(key: int, chunk_count: int) -> int:
    return mix64(key) % chunk_count


def _parse_column_type(ctype: str) -> tuple[str, int]:
    """Return (kind, width_bytes) for a column type string."""
    if ctype == "int64":
        return "int64", 8
    if ctype == "float64":
        return "float64", 8
    if ctype.startswith("bytes:"):
        width = int(ctype.split(":", 1)[1])
        if width <= 0:
            raise ValueError(f"bytes column width must be positive: {ctype}")
        return "bytes", width
    raise ValueError(f"unknown column type: {ctype}")


@dataclass(frozen=True)
class TableSchema:
    """Ordered column layout of one table. The key column must be int64."""

    table_name: str
    columns: tuple[tuple[str, str], ...]
    key_column: int = 0

    def __post_init__(self):
        names = [name for name, _ in self.columns]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate column names in {self.table_name}")
        if not 0 <= self.key_column < len(self.columns):
            raise ValueError("key_column out of range")
        if self.columns[self.key_column][1] != "int64":
            raise ValueError("key column must be int64")
        for _, ctype in self.columns:
            _parse_column_type(ctype)

    @property
    def value_columns(self) -> tuple[tuple[str, str], ...]:
        """All columns except the key, in declaration order."""
        return tuple(
            col for i, col in enumerate(self.columns) if i != self.key_column
        )

    def column_index(self, name: str) -> int:
        for i, (cname, _) in enumerate(self.columns):
            if cname == name:
                return i
        raise KeyError(name)

    def column_type(self, name: str) -> str:
        return self.columns[self.column_index(name)][1]

    @property
    def row_bytes(self) -> int:
        return sum(_parse_column_type(t)[1] for _, t in self.columns)

    def numpy_dtype(self, ctype: str):
        kind, width = _parse_column_type(ctype)
        if kind == "int64":
            return np.int64
        if kind == "float64":
            return np.float64
        return np.dtype(f"S{width}")

    def normalize_values(self, values: tuple) -> tuple:
        """Coerce a tuple of non-key values to canonical Python types.

        bytes values are padded with NULs to their declared fixed width so
        both replicas agree on equality.
        """
        vcols = self.value_columns
        if len(values) != len(vcols):
            raise ValueError(
                f"expected {len(vcols)} values for {self.table_name}, "
                f"got {len(values)}"
            )
        out = []
        for v, (name, ctype) in zip(values, vcols):
            kind, width = _parse_column_type(ctype)
            if kind == "int64":
                out.append(int(v))
            elif kind == "float64":
                out.append(float(v))
            else:
                b = bytes(v)
                if len(b) > width:
                    raise ValueError(f"value too wide for column {name}")
                out.append(b.ljust(width, b"\x00"))
        return tuple(out)


# ---------------------------------------------------------------------------
# Row store
# ---------------------------------------------------------------------------

@dataclass
class RowVersion:
    key: int
    values: tuple | None          # None marks a tombstone
    begin_ts: Timestamp
    end_ts: Timestamp | None      # None means "open" (infinity)
    writer_txn: int

    def visible_at(self, ts: Timestamp) -> bool:
        return self.begin_ts <= ts and (self.end_ts is None or ts < self.end_ts)


class RowStore:
    """Per-key version chains ordered by begin_ts; the transactional replica.

    A bulk-loaded base image is kept column-wise (numpy arrays) and acts as
    the implicit first open version of every loaded key; chains materialize
    lazily when a key is first rewritten. Readers may run concurrently;
    installs are expected to be serialized by the commit sequencer (the
    transaction engine holds its commit lock while calling install).
    """

    def __init__(self, schema: TableSchema):
        self.schema = schema
        self.chains: dict[int, list[RowVersion]] = {}
        self.latest_commit_ts: Timestamp = TS_ZERO
        self._base_keys = None        # sorted int64 array
        self._base_columns: dict | None = None
        self._base_ts: Timestamp = TS_ZERO

    # -- base image ----------------------------------------------------------

    def set_base(self, keys, columns: dict, load_ts: Timestamp) -> None:
        """Install the initial table image (sorted keys, per-column arrays)."""
        if self.chains or self._base_keys is not None:
            raise OutOfOrderInstall("base image must be loaded first")
        self._base_keys = keys
        self._base_columns = columns
        self._base_ts = load_ts
        if load_ts > self.latest_commit_ts:
            self.latest_commit_ts = load_ts

    def _base_values(self, key: int) -> tuple | None:
        if self._base_keys is None or len(self._base_keys) == 0:
            return None
        i = int(np.searchsorted(self._base_keys, key))
        if i >= len(self._base_keys) or int(self._base_keys[i]) != key:
            return None
        values = []
        for name, ctype in self.schema.value_columns:
            v = self._base_columns[name][i]
            if isinstance(v, bytes):
                _, width = _parse_column_type(ctype)
                v = v.ljust(width, b"\x00")
            elif isinstance(v, np.integer):
                v = int(v)
            elif isinstance(v, np.floating):
                v = float(v)
            values.append(v)
        return tuple(values)

    def _base_version(self, key: int) -> RowVersion | None:
        values = self._base_values(key)
        if values is None:
            return None
        return RowVersion(key, values, self._base_ts, None, 0)

    # -- reads/writes ----------------------------------------------------------

    def read(self, key: int, ts: Timestamp) -> tuple | None:
        """Values of the version visible at ts, or None if absent/deleted."""
        chain = self.chains.get(key)
        if not chain:
            if ts >= self._base_ts:
                return self._base_values(key)
            return None
        # Most reads target recent versions; scan backwards.
        for version in reversed(chain):
            if version.begin_ts <= ts:
                if version.end_ts is None or ts < version.end_ts:
                    return version.values
                return None
        return None

    def install(self, key: int, values: tuple | None, commit_ts: Timestamp,
                writer_txn: int = 0) -> None:
        """Close the key's open version at commit_ts and append a new one.

        values=None installs a tombstone. Raises OutOfOrderInstall when
        commit_ts is not beyond the open version's begin_ts.
        """
        if values is not None:
            values = self.schema.normalize_values(values)
        chain = self.chains.get(key)
        if chain is None:
            chain = self.chains[key] = []
            base = self._base_version(key)
            if base is not None:
                chain.append(base)
        if chain:
            last = chain[-1]
            if commit_ts <= last.begin_ts:
                raise OutOfOrderInstall(
                    f"key {key}: install at ts={commit_ts} after ts={last.begin_ts}"
                )
            if last.end_ts is None:
                last.end_ts = commit_ts
        chain.append(RowVersion(key, values, commit_ts, None, writer_txn))
        if commit_ts > self.latest_commit_ts:
            self.latest_commit_ts = commit_ts

    def open_version_begin_ts(self, key: int) -> Timestamp | None:
        """begin_ts of the newest version of key, or None if never written.
        Used by first-committer-wins validation."""
        chain = self.chains.get(key)
        if chain:
            return chain[-1].begin_ts
        if self._base_keys is not None and self._base_values(key) is not None:
            return self._base_ts
        return None

    def visible_state(self, ts: Timestamp) -> dict[int, tuple]:
        """key -> values for every live (non-tombstone) row visible at ts."""
        out = {}
        if self._base_keys is not None and ts >= self._base_ts:
            for key in self._base_keys.tolist():
                if key not in self.chains:
                    out[key] = self._base_values(key)
        for key in self.chains:
            values = self.read(key, ts)
            if values is not None:
                out[key] = values
        return out

    def gc(self, watermark: Timestamp) -> int:
        """Drop versions whose end_ts <= watermark. Returns versions dropped."""
        dropped = 0
        for key, chain in list(self.chains.items()):
            kept = [v for v in chain if v.end_ts is None or v.end_ts > watermark]
            dropped += len(chain) - len(kept)
            if kept:
                self.chains[key] = kept
            else:
                del self.chains[key]
        return dropped

    def dump_jsonl(self, path) -> None:
        """Debug dump, one version per line."""
        with open(path, "w") as fh:
            base_keys = ([] if self._base_keys is None
                         else self._base_keys.tolist())
            for key in base_keys:
                if key in self.chains:
                    continue
                values = [x.hex() if isinstance(x, bytes) else x
                          for x in self._base_values(key)]
                fh.write(json.dumps({
                    "key": key, "values": values,
                    "begin_ts": self._base_ts, "end_ts": None,
                }) + "\n")
            for key in sorted(self.chains):
                for v in self.chains[key]:
                    values = None
                    if v.values is not None:
                        values = [x.hex() if isinstance(x, bytes) else x
                                  for x in v.values]
                    fh.write(json.dumps({
                        "key": key,
                        "values": values,
                        "begin_ts": v.begin_ts,
                        "end_ts": v.end_ts,
                    }) + "\n")


# ---------------------------------------------------------------------------
# Column store
# ---------------------------------------------------------------------------

class ColumnChunk:
    """Fixed-capacity horizontal slice of the columnar replica.

    Arrays are treated as immutable after the chunk is published inside a
    version set; rewrites build a new ColumnChunk, sharing unchanged arrays.
    """

    __slots__ = ("chunk_id", "vault_id", "keys", "valid", "columns", "capacity")

    def __init__(self, chunk_id: int, vault_id: int, keys, valid,
                 columns: dict, capacity: int):
        self.chunk_id = chunk_id
        self.vault_id = vault_id
        self.keys = keys
        self.valid = valid
        self.columns = columns
        self.capacity = capacity

    @classmethod
    def empty(cls, schema: TableSchema, chunk_id: int, vault_id: int,
              capacity: int) -> "ColumnChunk":
        columns = {
            name: np.empty(0, dtype=schema.numpy_dtype(ctype))
            for name, ctype in schema.value_columns
        }
        return cls(chunk_id, vault_id,
                   np.empty(0, dtype=np.int64),
                   np.empty(0, dtype=np.bool_),
                   columns, capacity)

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def live_rows(self) -> int:
        return int(self.valid.sum())

    def stored_bytes(self, schema: TableSchema) -> int:
        """Bytes occupied by this chunk's arrays (all slots, all columns)."""
        return len(self.keys) * schema.row_bytes

    def slot_of(self, key: int) -> int:
        """Slot index holding key (valid or not), or -1."""
        hits = np.nonzero(self.keys == key)[0]
        return int(hits[0]) if len(hits) else -1


class ChunkVersionSet:
    """One immutable snapshot of the whole columnar replica."""

    __slots__ = ("version_ts", "chunks", "prev", "pins")

    def __init__(self, version_ts: Timestamp, chunks: tuple,
                 prev: "ChunkVersionSet | None"):
        self.version_ts = version_ts
        self.chunks = chunks
        self.prev = prev
        self.pins = 0


class SnapshotHandle:
    """Pins one version set; release() (or a with-block) unpins it."""

    def __init__(self, store: "ColumnStore", snapshot_ts: Timestamp,
                 version_set: ChunkVersionSet):
        self._store = store
        self.snapshot_ts = snapshot_ts
        self.version_set = version_set
        self._released = False

    @property
    def version_ts(self) -> Timestamp:
        return self.version_set.version_ts

    def release(self) -> None:
        if not self._released:
            self._released = True
            self._store._unpin(self.version_set)

    def __enter__(self) -> "SnapshotHandle":
        return self

    def __exit__(self, *exc) -> None:
        self.release()

    def scan_chunk(self, chunk_id: int):
        """Yield (key, values) for valid slots of one chunk, slot order."""
        chunk = self.version_set.chunks[chunk_id]
        schema = self._store.schema
        vcols = [name for name, _ in schema.value_columns]
        widths = {name: _parse_column_type(ctype)[1]
                  for name, ctype in schema.value_columns}
        for slot in np.nonzero(chunk.valid)[0]:
            values = []
            for name in vcols:
                v = chunk.columns[name][slot]
                if isinstance(v, bytes):
                    v = v.ljust(widths[name], b"\x00")
                elif isinstance(v, np.integer):
                    v = int(v)
                elif isinstance(v, np.floating):
                    v = float(v)
                values.append(v)
            yield int(chunk.keys[slot]), tuple(values)

    def scan_all(self) -> dict[int, tuple]:
        """key -> values over every chunk; the full-table snapshot image."""
        out = {}
        for chunk_id in range(len(self.version_set.chunks)):
            for key, values in self.scan_chunk(chunk_id):
                out[key] = values
        return out


def chunk_scan(handle: SnapshotHandle, chunk_id: int):
    """Module-level alias for SnapshotHandle.scan_chunk."""
    return handle.scan_chunk(chunk_id)


class ColumnStore:
    """Linear chain of chunk version sets with pin-based GC.

    Publication swaps the newest-set reference under a lock; readers that
    already hold a handle are unaffected (sets are immutable).
    """

    def __init__(self, schema: TableSchema, chunk_count: int = 64,
                 chunk_capacity: int = 1024, n_vaults: int = 16):
        self.schema = schema
        self.chunk_count = chunk_count
        self.chunk_capacity = chunk_capacity
        self.n_vaults = n_vaults
        chunks = tuple(
            ColumnChunk.empty(schema, cid, cid % n_vaults, chunk_capacity)
            for cid in range(chunk_count)
        )
        self._sets: list[ChunkVersionSet] = [ChunkVersionSet(TS_ZERO, chunks, None)]
        self._lock = threading.Lock()

    @property
    def newest(self) -> ChunkVersionSet:
        return self._sets[-1]

    @property
    def oldest_ts(self) -> Timestamp:
        return self._sets[0].version_ts

    @property
    def live_set_count(self) -> int:
        return len(self._sets)

    def chunk_of(self, key: int) -> int:
        return chunk_of_key(key, self.chunk_count)

    def publish(self, new_set: ChunkVersionSet) -> None:
        with self._lock:
            if new_set.version_ts <= self.newest.version_ts:
                raise OutOfOrderInstall(
                    f"version set at ts={new_set.version_ts} not beyond "
                    f"newest ts={self.newest.version_ts}"
                )
            self._sets.append(new_set)

    def snapshot_at(self, ts: Timestamp) -> SnapshotHandle:
        """Pin the newest set with version_ts <= ts (floor rule)."""
        with self._lock:
            if ts < self._sets[0].version_ts:
                raise SnapshotTooOld(
                    f"ts={ts} precedes oldest retained set "
                    f"ts={self._sets[0].version_ts}"
                )
            chosen = None
            for vs in reversed(self._sets):
                if vs.version_ts <= ts:
                    chosen = vs
                    break
            chosen.pins += 1
            return SnapshotHandle(self, ts, chosen)

    def _unpin(self, version_set: ChunkVersionSet) -> None:
        with self._lock:
            version_set.pins -= 1

    def gc(self, watermark: Timestamp) -> int:
        """Reclaim unpinned sets older than the watermark.

        A set is reclaimable only when a newer set with version_ts <= watermark
        exists, so the floor of the watermark always survives.
        """
        with self._lock:
            floor_idx = None
            for i in reversed(range(len(self._sets))):
                if self._sets[i].version_ts <= watermark:
                    floor_idx = i
                    break
            if floor_idx is None or floor_idx == 0:
                return 0
            keep: list[ChunkVersionSet] = []
            reclaimed = 0
            for i, vs in enumerate(self._sets):
                if i < floor_idx and vs.pins == 0:
                    reclaimed += 1
                else:
                    keep.append(vs)
            # Cut prev links past the retained tail so chunks can be freed.
            keep[0].prev = None
            for prev, cur in zip(keep, keep[1:]):
                if cur.prev is not prev:
                    cur.prev = prev
            self._sets = keep
            return reclaimed


def snapshot_at(store: ColumnStore, ts: Timestamp) -> SnapshotHandle:
    """Module-level alias for ColumnStore.snapshot_at."""
    return store.snapshot_at(ts)


def bulk_load_arrays(row_store: RowStore, col_store: ColumnStore,
                     keys, columns: dict, load_ts: Timestamp = 1) -> None:
    """Install an initial table image into both replicas at one timestamp.

    keys must be a sorted int64 array; columns maps each value-column name to
    an equally long array. The load is the shared prefix of both histories:
    the row store takes the arrays as its base image and the column store
    gets a version set at load_ts, partitioned by the key-placement hash.
    """
    schema = row_store.schema
    row_store.set_base(keys, columns, load_ts)

    if len(keys) == 0:
        return
    assignment = mix64_array(keys) % np.uint64(col_store.chunk_count)
    chunks = []
    for cid in range(col_store.chunk_count):
        mask = assignment == cid
        n = int(mask.sum())
        base = col_store.newest.chunks[cid]
        if n == 0:
            chunks.append(base)
            continue
        if n > col_store.chunk_capacity:
            raise ChunkCapacityExceeded(
                f"chunk {cid}: {n} rows exceed capacity "
                f"{col_store.chunk_capacity}"
            )
        chunk_cols = {name: columns[name][mask]
                      for name, _ in schema.value_columns}
        chunks.append(ColumnChunk(cid, base.vault_id, keys[mask],
                                  np.ones(n, dtype=np.bool_), chunk_cols,
                                  col_store.chunk_capacity))
    col_store.publish(ChunkVersionSet(load_ts, tuple(chunks), col_store.newest))


def bulk_load(row_store: RowStore, col_store: ColumnStore,
              rows: dict[int, tuple], load_ts: Timestamp = 1) -> None:
    """Dict-shaped convenience wrapper around bulk_load_arrays."""
    schema = row_store.schema
    ordered = sorted(rows)
    normalized = [schema.normalize_values(rows[k]) for k in ordered]
    keys = np.array(ordered, dtype=np.int64)
    columns = {}
    for vi, (name, ctype) in enumerate(schema.value_columns):
        columns[name] = np.array([v[vi] for v in normalized],
                                 dtype=schema.numpy_dtype(ctype))
    bulk_load_arrays(row_store, col_store, keys, columns, load_ts)
