"""Independent oracles and end-of-run invariant checks.

Everything here is deliberately naive: plain-Python row loops and commit-log
replay, sharing no code with the chunked/vectorized execution paths they
check. The `validate` CLI subcommand and the test suites both drive these.
"""

from __future__ import annotations

import numpy as np

from .analytics import QueryPlan
from .errors import PlanError
from .storage import ColumnStore, RowStore, TableSchema, Timestamp
from .txn import DeltaRecord


def replay_state(initial: dict[int, tuple], commit_log, ts: Timestamp) -> dict:
    """Table image after applying every delta with commit_ts <= ts."""
    state = dict(initial)
    for record in commit_log:
        if record.commit_ts > ts:
            break
        for op in record.ops:
            if op.kind == "delete":
                state.pop(op.key, None)
            else:
                state[op.key] = op.values
    return state


def naive_eval(plan: QueryPlan, rows: dict[int, tuple], schema: TableSchema,
               build_rows: dict[int, tuple] | None = None,
               build_schema: TableSchema | None = None):
    """Row-at-a-time reference evaluation of a plan over a table image.

    Mirrors the engine's result shape: (rows, grouped) where grouped results
    are ((group_key, agg_values), ...) sorted by group key.
    """
    key_name = schema.columns[schema.key_column][0]
    vcols = [n for n, _ in schema.value_columns]

    def cell(key, values, col):
        if col == key_name:
            return key
        return values[vcols.index(col)]

    def passes(key, values):
        for col, op, const in plan.predicate:
            v = cell(key, values, col)
            if op == "<" and not v < const:
                return False
            if op == "<=" and not v <= const:
                return False
            if op == "=" and not v == const:
                return False
            if op == ">=" and not v >= const:
                return False
            if op == ">" and not v > const:
                return False
            if op == "!=" and not v != const:
                return False
        return True

    selected = [(k, rows[k]) for k in sorted(rows) if passes(k, rows[k])]

    if plan.join is not None:
        bs = build_schema or schema
        b_key_name = bs.columns[bs.key_column][0]
        b_vcols = [n for n, _ in bs.value_columns]
        brows = build_rows if build_rows is not None else rows
        joined = []
        for k, values in selected:
            probe_key = cell(k, values, plan.join.probe_key_column)
            for bk in sorted(brows):
                bvalues = brows[bk]
                if plan.join.build_key_column == b_key_name:
                    build_key = bk
                else:
                    build_key = bvalues[b_vcols.index(plan.join.build_key_column)]
                if build_key == probe_key:
                    joined.append(((k,) + tuple(values) + (bk,) + tuple(bvalues)))
        if not plan.aggregates:
            return tuple(sorted(joined)), False
        flat_cols = [key_name] + vcols
        accs = _agg_init(plan)
        for row in joined:
            _agg_feed(plan, accs, lambda col: row[flat_cols.index(col)])
        return (((), tuple(_agg_fin(plan, accs))),), True

    if not plan.aggregates:
        return tuple((k, tuple(v)) for k, v in selected), False

    if not plan.group_by:
        accs = _agg_init(plan)
        for k, values in selected:
            _agg_feed(plan, accs, lambda col: cell(k, values, col))
        return (((), tuple(_agg_fin(plan, accs))),), True

    groups: dict[tuple, list] = {}
    for k, values in selected:
        gkey = tuple(cell(k, values, g) for g in plan.group_by)
        if gkey not in groups:
            groups[gkey] = _agg_init(plan)
        _agg_feed(plan, groups[gkey], lambda col: cell(k, values, col))
    out = tuple((gkey, tuple(_agg_fin(plan, groups[gkey])))
                for gkey in sorted(groups))
    return out, True


def _agg_init(plan):
    return [{"sum": 0, "n": 0, "min": None, "max": None}
            for _ in plan.aggregates]


def _agg_feed(plan, accs, get):
    for acc, (op, col) in zip(accs, plan.aggregates):
        acc["n"] += 1
        if op == "count":
            continue
        v = get(col)
        acc["sum"] = acc["sum"] + v
        if acc["min"] is None or v < acc["min"]:
            acc["min"] = v
        if acc["max"] is None or v > acc["max"]:
            acc["max"] = v


def _agg_fin(plan, accs):
    out = []
    for acc, (op, _) in zip(accs, plan.aggregates):
        if op == "count":
            out.append(acc["n"])
        elif op == "sum":
            out.append(acc["sum"])
        elif op == "avg":
            out.append(acc["sum"] / acc["n"] if acc["n"] else None)
        elif op == "min":
            out.append(acc["min"])
        elif op == "max":
            out.append(acc["max"])
        else:
            raise PlanError(f"unknown aggregate {op!r}")
    return out


# ---------------------------------------------------------------------------
# Structural / cross-replica checks
# ---------------------------------------------------------------------------

def chain_violations(store: RowStore) -> list[str]:
    """Visibility partition + linearity over every version chain."""
    problems = []
    for key, chain in store.chains.items():
        open_count = sum(1 for v in chain if v.end_ts is None)
        if open_count > 1:
            problems.append(f"key {key}: {open_count} open versions")
        for v in chain:
            if v.end_ts is not None and v.begin_ts >= v.end_ts:
                problems.append(
                    f"key {key}: empty interval [{v.begin_ts},{v.end_ts})")
        for a, b in zip(chain, chain[1:]):
            if a.begin_ts >= b.begin_ts:
                problems.append(f"key {key}: begin_ts not increasing")
            if a.end_ts is None or a.end_ts > b.begin_ts:
                problems.append(
                    f"key {key}: versions [{a.begin_ts},{a.end_ts}) and "
                    f"[{b.begin_ts},...) overlap")
    return problems


def version_set_violations(colstore: ColumnStore) -> list[str]:
    problems = []
    sets = colstore._sets
    for a, b in zip(sets, sets[1:]):
        if a.version_ts >= b.version_ts:
            problems.append(
                f"version sets not strictly increasing: "
                f"{a.version_ts} then {b.version_ts}")
    for vs in sets:
        seen = set()
        for chunk in vs.chunks:
            for k, _ in _chunk_rows(vs, chunk.chunk_id, colstore.schema):
                if k in seen:
                    problems.append(
                        f"key {k} appears twice in set ts={vs.version_ts}")
                seen.add(k)
    return problems


def _chunk_rows(version_set, chunk_id, schema):
    chunk = version_set.chunks[chunk_id]
    widths = {}
    for name, ctype in schema.value_columns:
        widths[name] = int(ctype.split(":", 1)[1]) if ctype.startswith("bytes:") else 0
    for slot in np.nonzero(chunk.valid)[0]:
        values = []
        for name, _ in schema.value_columns:
            v = chunk.columns[name][slot]
            if isinstance(v, bytes) and widths[name]:
                v = v.ljust(widths[name], b"\x00")
            elif isinstance(v, np.integer):
                v = int(v)
            elif isinstance(v, np.floating):
                v = float(v)
            values.append(v)
        yield int(chunk.keys[slot]), tuple(values)


def convergence_violations(rowstore: RowStore, colstore: ColumnStore) -> list[str]:
    """After quiesce + drain: row image at latest_commit_ts must equal the
    newest column snapshot, exactly."""
    ts = rowstore.latest_commit_ts
    row_image = rowstore.visible_state(ts)
    with colstore.snapshot_at(ts) as handle:
        col_image = handle.scan_all()
    problems = []
    for key in row_image.keys() - col_image.keys():
        problems.append(f"key {key} in row store only")
    for key in col_image.keys() - row_image.keys():
        problems.append(f"key {key} in column store only")
    for key in row_image.keys() & col_image.keys():
        if row_image[key] != col_image[key]:
            problems.append(
                f"key {key}: row {row_image[key]!r} != column {col_image[key]!r}")
    return problems


def prefix_consistency_violations(initial: dict, commit_log, colstore,
                                  sample_ts: list[int]) -> list[str]:
    """Each retained snapshot must equal commit-log replay to its floor ts."""
    problems = []
    for ts in sample_ts:
        with colstore.snapshot_at(ts) as handle:
            got = handle.scan_all()
            floor_ts = handle.version_ts
        expected = replay_state(initial, commit_log, floor_ts)
        if got != expected:
            missing = expected.keys() - got.keys()
            extra = got.keys() - expected.keys()
            diff = [k for k in expected.keys() & got.keys()
                    if expected[k] != got[k]]
            problems.append(
                f"snapshot@{ts} (floor {floor_ts}): missing={sorted(missing)[:5]} "
                f"extra={sorted(extra)[:5]} changed={sorted(diff)[:5]}")
    return problems
