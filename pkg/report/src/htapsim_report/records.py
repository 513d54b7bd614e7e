"""Typed parsing of the htapsim metrics CSV.

The column contract below mirrors the engine's documented header, in order.
A file whose header deviates in any way fails loudly (MissingColumn); rows
that do not parse are errors, never silent skips. This package talks to the
engine only through this file format.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass


class ReportError(Exception):
    """Base class for report failures."""


class MissingColumn(ReportError):
    """The CSV header does not match the documented metrics contract."""


class EmptyInput(ReportError):
    """The CSV has no data rows (or none usable for the requested figure)."""


# name -> type, in documented order
COLUMNS: tuple[tuple[str, type], ...] = (
    ("mode", str), ("seed", int), ("cell", str),
    ("param", str), ("param_value", str),
    ("duration", float), ("makespan", float),
    ("txn_clients", int), ("analytical_clients", int),
    ("txn_commits", int), ("txn_aborts", int), ("txn_throughput", float),
    ("analytical_queries_completed", int), ("analytical_throughput", float),
    ("freshness_lag_ts_mean", float), ("freshness_lag_ts_max", int),
    ("freshness_lag_records_mean", float), ("freshness_lag_records_max", int),
    ("freshness_lag_final", int),
    ("energy_offchip_pj", float), ("energy_internal_pj", float),
    ("energy_cpu_pj", float), ("energy_pim_pj", float),
    ("energy_total_pj", float),
    ("util_cpu", float), ("util_pim", float), ("util_vault", float),
    ("util_link", float), ("util_offchip", float),
    ("bytes_offchip_txn", float), ("bytes_offchip_analytics", float),
    ("bytes_offchip_propagation", float),
    ("bytes_internal_txn", float), ("bytes_internal_analytics", float),
    ("bytes_internal_propagation", float),
    ("ops_cpu_txn", float), ("ops_cpu_analytics", float),
    ("ops_cpu_propagation", float),
    ("ops_pim_txn", float), ("ops_pim_analytics", float),
    ("ops_pim_propagation", float),
    ("freshness_timeline", str),
)

HEADER = tuple(name for name, _ in COLUMNS)


@dataclass(frozen=True)
class RunRecord:
    """One parsed metrics row."""

    values: dict

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None

    def label(self) -> str:
        cell = self.values["cell"]
        base = f"{self.values['mode']}/s{self.values['seed']}"
        return base if cell == "single" else f"{base}/{cell}"

    def timeline(self) -> list[tuple[float, int]]:
        """Parsed freshness samples as (modeled seconds, timestamp lag)."""
        text = self.values["freshness_timeline"]
        points = []
        if not text:
            return points
        for item in text.split(";"):
            t, lag = item.split(":")
            points.append((float(t), int(lag)))
        return points


def parse_metrics_csv(path) -> list[RunRecord]:
    """Read and type every row; header must match the contract exactly."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ReportError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumn(f"{path}: no header row") from None
        if tuple(header) != HEADER:
            missing = [c for c in HEADER if c not in header]
            extra = [c for c in header if c not in HEADER]
            raise MissingColumn(
                f"{path}: header mismatch; missing={missing} extra={extra}"
                + ("" if missing or extra else " (column order differs)"))
        records = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(COLUMNS):
                raise MissingColumn(
                    f"{path}:{lineno}: expected {len(COLUMNS)} cells, "
                    f"got {len(row)}")
            values = {}
            for (name, caster), cell in zip(COLUMNS, row):
                try:
                    values[name] = caster(cell)
                except ValueError as exc:
                    raise ReportError(
                        f"{path}:{lineno}: bad value for {name}: {cell!r}"
                    ) from exc
            records.append(RunRecord(values))
    return records


def require_rows(records: list[RunRecord], what: str) -> None:
    if not records:
        raise EmptyInput(f"no rows {what}")
