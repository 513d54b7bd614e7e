"""Snapshot-isolated transaction engine over the row store.

Transactions read from the snapshot taken at begin() and buffer writes until
commit. Commit validation is optimistic first-committer-wins: if any written
key gained a version after the transaction's snapshot, the transaction
aborts. The commit critical section covers validate + install + delta
enqueue, so the emitted delta stream is gap-free and ordered by commit_ts.

Two drivers exercise the engine: real threads (the engine is lock-protected)
and a seeded deterministic scheduler that interleaves scripted transactions
one operation at a time, which is what the correctness suites use.
"""

from __future__ import annotations

import json
import random
import threading
from dataclasses import dataclass, field

from .errors import MalformedHistory, TxnNotActive, WriteWriteConflict
from .storage import RowStore, Timestamp

DELETE = None  # sentinel accepted by write(): buffer a deletion


@dataclass(frozen=True)
class DeltaOp:
    kind: str              # insert | update | delete
    key: int
    values: tuple | None   # None for deletes

    def to_json(self):
        values = None
        if self.values is not None:
            values = [v.hex() if isinstance(v, bytes) else v for v in self.values]
        return {"kind": self.kind, "key": self.key, "values": values}


@dataclass(frozen=True)
class DeltaRecord:
    commit_ts: Timestamp
    txn_id: int
    ops: tuple[DeltaOp, ...]

    def to_json(self):
        return {
            "commit_ts": self.commit_ts,
            "txn_id": self.txn_id,
            "ops": [op.to_json() for op in self.ops],
        }


class TxnHandle:
    __slots__ = ("txn_id", "snapshot_ts", "read_set", "write_buffer", "state")

    def __init__(self, txn_id: int, snapshot_ts: Timestamp):
        self.txn_id = txn_id
        self.snapshot_ts = snapshot_ts
        self.read_set: set[int] = set()
        self.write_buffer: dict[int, tuple | None] = {}
        self.state = "active"


class TxnEngine:
    """Executes transactions against a RowStore and emits ordered deltas.

    delta_sink, when given, receives one DeltaRecord per writing commit.
    demand_hook, when given, is called as demand_hook(txn_id, n_ops) for each
    read/write so the harness can bill modeled cache-miss traffic.
    record_history enables the event log consumed by validate_history.
    """

    def __init__(self, store: RowStore, delta_sink=None, record_history=False,
                 demand_hook=None):
        self.store = store
        self.delta_sink = delta_sink
        self.demand_hook = demand_hook
        self._lock = threading.Lock()
        self._next_txn_id = 1
        self._next_commit_ts = store.latest_commit_ts + 1
        self.commit_log: list[DeltaRecord] = []
        self.commits = 0
        self.aborts = 0
        self.history: list[dict] | None = [] if record_history else None

    # -- lifecycle ---------------------------------------------------------

    def begin(self) -> TxnHandle:
        with self._lock:
            txn = TxnHandle(self._next_txn_id, self.store.latest_commit_ts)
            self._next_txn_id += 1
            self._record({"type": "begin", "txn": txn.txn_id,
                          "snapshot_ts": txn.snapshot_ts})
        return txn

    def read(self, txn: TxnHandle, key: int) -> tuple | None:
        self._check_active(txn)
        txn.read_set.add(key)
        if key in txn.write_buffer:
            value = txn.write_buffer[key]
        else:
            value = self.store.read(key, txn.snapshot_ts)
        if self.demand_hook is not None:
            self.demand_hook(txn.txn_id, 1)
        self._record({"type": "read", "txn": txn.txn_id, "key": key,
                      "value": _jsonable(value)})
        return value

    def write(self, txn: TxnHandle, key: int, values: tuple | None) -> None:
        """Buffer a write; values=DELETE buffers a deletion."""
        self._check_active(txn)
        if values is not None:
            values = self.store.schema.normalize_values(values)
        txn.write_buffer[key] = values
        if self.demand_hook is not None:
            self.demand_hook(txn.txn_id, 1)
        self._record({"type": "write", "txn": txn.txn_id, "key": key,
                      "value": _jsonable(values)})

    def abort(self, txn: TxnHandle) -> None:
        self._check_active(txn)
        txn.state = "aborted"
        self.aborts += 1
        self._record({"type": "abort", "txn": txn.txn_id})

    def commit(self, txn: TxnHandle) -> Timestamp:
        """Validate and install. Raises WriteWriteConflict on failure, after
        marking the transaction aborted; the store is left untouched.

        Read-only transactions commit without consuming a commit timestamp
        and return their snapshot_ts, so commit timestamps enumerate exactly
        the delta records.
        """
        self._check_active(txn)
        with self._lock:
            if not txn.write_buffer:
                txn.state = "committed"
                self.commits += 1
                self._record({"type": "commit", "txn": txn.txn_id,
                              "commit_ts": txn.snapshot_ts, "read_only": True})
                return txn.snapshot_ts

            for key in txn.write_buffer:
                begin = self.store.open_version_begin_ts(key)
                if begin is not None and begin > txn.snapshot_ts:
                    txn.state = "aborted"
                    self.aborts += 1
                    self._record({"type": "abort", "txn": txn.txn_id})
                    raise WriteWriteConflict(
                        f"txn {txn.txn_id}: key {key} written at "
                        f"ts={begin} > snapshot {txn.snapshot_ts}"
                    )

            ops = []
            for key, values in txn.write_buffer.items():
                visible = self.store.read(key, self.store.latest_commit_ts)
                if values is None:
                    if visible is None:
                        continue  # deleting nothing is a no-op
                    ops.append(DeltaOp("delete", key, None))
                elif visible is None:
                    ops.append(DeltaOp("insert", key, values))
                else:
                    ops.append(DeltaOp("update", key, values))

            if not ops:
                txn.state = "committed"
                self.commits += 1
                self._record({"type": "commit", "txn": txn.txn_id,
                              "commit_ts": txn.snapshot_ts, "read_only": True})
                return txn.snapshot_ts

            commit_ts = self._next_commit_ts
            self._next_commit_ts += 1
            for op in ops:
                self.store.install(op.key, op.values, commit_ts, txn.txn_id)
            record = DeltaRecord(commit_ts, txn.txn_id, tuple(ops))
            self.commit_log.append(record)
            if self.delta_sink is not None:
                self.delta_sink(record)
            txn.state = "committed"
            self.commits += 1
            self._record({"type": "commit", "txn": txn.txn_id,
                          "commit_ts": commit_ts})
            return commit_ts

    # -- helpers -----------------------------------------------------------

    def _check_active(self, txn: TxnHandle) -> None:
        if txn.state != "active":
            raise TxnNotActive(f"txn {txn.txn_id} is {txn.state}")

    def _record(self, event: dict) -> None:
        if self.history is not None:
            self.history.append(event)

    def export_commit_log_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for record in self.commit_log:
                fh.write(json.dumps(record.to_json()) + "\n")


def _jsonable(values):
    if values is None:
        return None
    return [v.hex() if isinstance(v, bytes) else v for v in values]


# ---------------------------------------------------------------------------
# Deterministic interleaved execution
# ---------------------------------------------------------------------------

def run_interleaved(engine: TxnEngine, scripts, seed: int) -> None:
    """Drive scripted transactions one operation per step, interleaved by a
    seeded RNG, so a given (scripts, seed) pair always produces the same
    history and commit log.

    Each script is an iterable of operations:
        ("begin",) ("read", key) ("write", key, values) ("commit",) ("abort",)
    A commit that hits a write-write conflict aborts the transaction and the
    rest of that script is skipped.
    """
    rng = random.Random(seed)
    pending = {i: iter(s) for i, s in enumerate(scripts)}
    handles: dict[int, TxnHandle] = {}
    while pending:
        idx = rng.choice(sorted(pending))
        script = pending[idx]
        try:
            op = next(script)
        except StopIteration:
            del pending[idx]
            continue
        kind = op[0]
        if kind == "begin":
            handles[idx] = engine.begin()
        elif kind == "read":
            engine.read(handles[idx], op[1])
        elif kind == "write":
            engine.write(handles[idx], op[1], op[2])
        elif kind == "commit":
            try:
                engine.commit(handles[idx])
            except WriteWriteConflict:
                del pending[idx]
        elif kind == "abort":
            engine.abort(handles[idx])
        else:
            raise ValueError(f"unknown scripted op {op!r}")


# ---------------------------------------------------------------------------
# History checker (brute-force snapshot-isolation oracle)
# ---------------------------------------------------------------------------

@dataclass
class _TxnTrace:
    begin_seen: bool = False
    snapshot_ts: Timestamp | None = None
    writes: dict = field(default_factory=dict)   # key -> last buffered value
    write_keys: set = field(default_factory=set)
    commit_ts: Timestamp | None = None
    read_only: bool = False
    aborted: bool = False
    finished: bool = False


def validate_history(history, initial_state: dict[int, tuple] | None = None):
    """Check a recorded history for snapshot-isolation semantics by replay.

    Every read must equal the transaction's own buffered write or the value
    produced by replaying committed writes up to the reader's snapshot_ts;
    no two committed transactions may write the same key concurrently.

    Returns (True, []) or (False, [violation descriptions]). Raises
    MalformedHistory for structurally broken input (events before begin,
    double termination, unfinished transactions, duplicate commit_ts).
    """
    traces: dict[int, _TxnTrace] = {}
    commit_order: list[tuple[Timestamp, int, dict]] = []
    violations: list[str] = []
    last_commit_ts = None

    def trace(txn_id) -> _TxnTrace:
        return traces.setdefault(txn_id, _TxnTrace())

    # First pass: structure + collect commits, checking reads as we go needs
    # the commit log, so reads are checked in a second pass.
    for ev in history:
        t = trace(ev["txn"])
        kind = ev["type"]
        if kind == "begin":
            if t.begin_seen:
                raise MalformedHistory(f"txn {ev['txn']} began twice")
            t.begin_seen = True
            t.snapshot_ts = ev["snapshot_ts"]
        elif kind in ("read", "write"):
            if not t.begin_seen or t.finished:
                raise MalformedHistory(
                    f"txn {ev['txn']} {kind} outside its lifetime")
            if kind == "write":
                t.writes[ev["key"]] = _unjson(ev["value"])
                t.write_keys.add(ev["key"])
        elif kind == "commit":
            if not t.begin_seen or t.finished:
                raise MalformedHistory(f"txn {ev['txn']} bad commit")
            t.finished = True
            t.commit_ts = ev["commit_ts"]
            t.read_only = bool(ev.get("read_only"))
            if not t.read_only:
                if last_commit_ts is not None and t.commit_ts <= last_commit_ts:
                    violations.append(
                        f"commit_ts {t.commit_ts} of txn {ev['txn']} not "
                        f"increasing in commit order")
                last_commit_ts = t.commit_ts
                commit_order.append(
                    (t.commit_ts, ev["txn"],
                     {k: t.writes[k] for k in t.writes}))
        elif kind == "abort":
            if not t.begin_seen or t.finished:
                raise MalformedHistory(f"txn {ev['txn']} bad abort")
            t.finished = True
            t.aborted = True
        else:
            raise MalformedHistory(f"unknown event type {kind!r}")

    for txn_id, t in traces.items():
        if not t.finished:
            raise MalformedHistory(f"txn {txn_id} never terminated")

    seen_ts = [ts for ts, _, _ in commit_order]
    if len(seen_ts) != len(set(seen_ts)):
        raise MalformedHistory("duplicate commit timestamps")
    commit_order.sort()

    def replay_to(ts: Timestamp) -> dict:
        state = dict(initial_state or {})
        for commit_ts, _, writes in commit_order:
            if commit_ts > ts:
                break
            for key, value in writes.items():
                if value is None:
                    state.pop(key, None)
                else:
                    state[key] = value
        return state

    # Second pass: reads against snapshot replay + read-your-writes.
    buffered: dict[int, dict] = {}
    snapshot_cache: dict[Timestamp, dict] = {}
    for ev in history:
        if ev["type"] == "write":
            buffered.setdefault(ev["txn"], {})[ev["key"]] = _unjson(ev["value"])
        elif ev["type"] == "read":
            t = traces[ev["txn"]]
            own = buffered.get(ev["txn"], {})
            if ev["key"] in own:
                expected = own[ev["key"]]
            else:
                if t.snapshot_ts not in snapshot_cache:
                    snapshot_cache[t.snapshot_ts] = replay_to(t.snapshot_ts)
                expected = snapshot_cache[t.snapshot_ts].get(ev["key"])
            got = _unjson(ev["value"])
            if got != expected:
                violations.append(
                    f"txn {ev['txn']} read key {ev['key']} = {got!r}, "
                    f"snapshot at ts={t.snapshot_ts} holds {expected!r}")

    # First-committer-wins: no committed writer may overlap another committed
    # writer of the same key.
    committed = [(txn_id, t) for txn_id, t in traces.items()
                 if not t.aborted and not t.read_only and t.commit_ts is not None
                 and t.write_keys]
    for i, (id_a, a) in enumerate(committed):
        for id_b, b in committed[i + 1:]:
            common = a.write_keys & b.write_keys
            if not common:
                continue
            for first, second, fid, sid in (
                (a, b, id_a, id_b), (b, a, id_b, id_a)):
                if (second.snapshot_ts < first.commit_ts
                        and first.commit_ts < second.commit_ts):
                    violations.append(
                        f"txns {fid} and {sid} both committed writes to "
                        f"{sorted(common)} concurrently")

    return (not violations), violations


def _unjson(value):
    if value is None:
        return None
    return tuple(bytes.fromhex(v) if isinstance(v, str) else v for v in value)
