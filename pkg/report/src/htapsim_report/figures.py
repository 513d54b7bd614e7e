"""The four comparison figures.

Every number plotted is a CSV cell or a ratio/mean of CSV cells; nothing is
re-derived from raw events here. Output is deterministic for a given input
file (fixed style, seeded SVG ids, no embedded dates).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "htapsim-report"

import matplotlib.pyplot as plt

from .records import EmptyInput, RunRecord, parse_metrics_csv, require_rows

MODE_ORDER = ("shared", "dual_shared", "islands")
MODE_COLORS = {"shared": "#c44e52", "dual_shared": "#dd8452",
               "islands": "#55a868"}
ENERGY_PARTS = (("energy_offchip_pj", "off-chip"),
                ("energy_internal_pj", "internal"),
                ("energy_cpu_pj", "cpu"),
                ("energy_pim_pj", "pim"))


def _save(fig, out_path):
    fig.savefig(out_path, dpi=120, metadata=_strip_dates(out_path))
    plt.close(fig)
    return out_path


def _strip_dates(out_path):
    if str(out_path).endswith(".svg"):
        return {"Date": None}
    return None


def _modes_of(records):
    seen = []
    for r in records:
        if r.mode not in seen:
            seen.append(r.mode)
    return sorted(seen, key=lambda m: (MODE_ORDER.index(m)
                                       if m in MODE_ORDER else 99, m))


def _combined_rows(records):
    """Rows representing the combined workload: 'both' cells when the file
    came from the isolation suite, plain 'single' runs otherwise."""
    cells = {r.cell for r in records}
    wanted = "both" if "both" in cells else "single"
    return [r for r in records if r.cell == wanted]


def _mean(values):
    return sum(values) / len(values)


def plot_throughput(csv_path, out_path) -> str:
    """Grouped bars: transactional and analytical throughput per mode."""
    records = parse_metrics_csv(csv_path)
    require_rows(records, f"in {csv_path}")
    rows = _combined_rows(records)
    require_rows(rows, "with a combined-workload cell")
    modes = _modes_of(rows)
    txn = [_mean([r.txn_throughput for r in rows if r.mode == m])
           for m in modes]
    ana = [_mean([r.analytical_throughput for r in rows if r.mode == m])
           for m in modes]
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.2))
    for ax, series, title in ((axes[0], txn, "transactional"),
                              (axes[1], ana, "analytical")):
        ax.bar(range(len(modes)), series,
               color=[MODE_COLORS.get(m, "#777") for m in modes])
        ax.set_xticks(range(len(modes)), modes, rotation=15)
        ax.set_title(f"{title} throughput")
        ax.set_ylabel("per modeled second")
        ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    return _save(fig, out_path)


def plot_interference(csv_path, out_path) -> str:
    """Throughput retention (together / alone) per mode and side."""
    records = parse_metrics_csv(csv_path)
    require_rows(records, f"in {csv_path}")
    by_mode_cell = {}
    for r in records:
        by_mode_cell.setdefault((r.mode, r.cell), []).append(r)
    modes = [m for m in _modes_of(records)
             if (m, "both") in by_mode_cell
             and (m, "txn_alone") in by_mode_cell
             and (m, "analytics_alone") in by_mode_cell]
    if not modes:
        raise EmptyInput(
            f"{csv_path} has no isolation-suite cells "
            "(txn_alone/analytics_alone/both)")

    def retention(mode, both_col, alone_cell):
        both = _mean([getattr(r, both_col)
                      for r in by_mode_cell[(mode, "both")]])
        alone = _mean([getattr(r, both_col)
                       for r in by_mode_cell[(mode, alone_cell)]])
        return both / alone if alone > 0 else 0.0

    txn = [retention(m, "txn_throughput", "txn_alone") for m in modes]
    ana = [retention(m, "analytical_throughput", "analytics_alone")
           for m in modes]
    width = 0.38
    fig, ax = plt.subplots(figsize=(6.4, 3.4))
    xs = range(len(modes))
    ax.bar([x - width / 2 for x in xs], txn, width, label="transactional",
           color="#4c72b0")
    ax.bar([x + width / 2 for x in xs], ana, width, label="analytical",
           color="#8172b3")
    ax.axhline(1.0, color="black", linewidth=0.8, linestyle=":")
    ax.set_xticks(list(xs), modes)
    ax.set_ylabel("throughput retention\n(together / alone)")
    ax.set_ylim(0, 1.15)
    ax.legend(loc="lower right")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    return _save(fig, out_path)


def plot_energy(csv_path, out_path) -> str:
    """Stacked per-category energy bars; stacks sum to the reported total."""
    records = parse_metrics_csv(csv_path)
    require_rows(records, f"in {csv_path}")
    rows = _combined_rows(records)
    require_rows(rows, "with a combined-workload cell")
    modes = _modes_of(rows)
    fig, ax = plt.subplots(figsize=(6.4, 3.4))
    bottoms = [0.0] * len(modes)
    for column, label in ENERGY_PARTS:
        part = [_mean([getattr(r, column) for r in rows if r.mode == m]) * 1e-12
                for m in modes]
        ax.bar(range(len(modes)), part, bottom=bottoms, label=label)
        bottoms = [b + p for b, p in zip(bottoms, part)]
    ax.set_xticks(range(len(modes)), modes)
    ax.set_ylabel("modeled energy (J)")
    ax.legend()
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    return _save(fig, out_path)


def plot_freshness(csv_path, out_path) -> str:
    """Freshness-lag timelines, one line per run; quiesced runs end at 0."""
    records = parse_metrics_csv(csv_path)
    require_rows(records, f"in {csv_path}")
    lines = [(r, r.timeline()) for r in records if r.timeline()]
    if not lines:
        raise EmptyInput(f"{csv_path} has no freshness timelines")
    fig, ax = plt.subplots(figsize=(7, 3.4))
    for record, points in lines:
        ts = [t * 1e3 for t, _ in points]
        lags = [lag for _, lag in points]
        ax.plot(ts, lags, label=record.label(), linewidth=1.2,
                color=MODE_COLORS.get(record.mode, None), alpha=0.8)
    ax.set_xlabel("modeled time (ms)")
    ax.set_ylabel("freshness lag (timestamps)")
    if len(lines) <= 10:
        ax.legend(fontsize=7)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, out_path)


ALL_FIGURES = (("throughput", plot_throughput),
               ("interference", plot_interference),
               ("energy", plot_energy),
               ("freshness", plot_freshness))
