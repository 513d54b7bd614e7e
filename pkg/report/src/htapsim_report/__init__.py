"""htapsim-report: renders the htapsim metrics CSV into comparison figures
(throughput per mode, interference retention, energy breakdown, freshness
timelines). Consumes only the documented CSV contract."""

from .figures import (ALL_FIGURES, plot_energy, plot_freshness,
                      plot_interference, plot_throughput)
from .records import (EmptyInput, MissingColumn, ReportError, RunRecord,
                      parse_metrics_csv)

__version__ = "0.1.0"

__all__ = [
    "ALL_FIGURES", "EmptyInput", "MissingColumn", "ReportError", "RunRecord",
    "parse_metrics_csv", "plot_energy", "plot_freshness", "plot_interference",
    "plot_throughput",
]
