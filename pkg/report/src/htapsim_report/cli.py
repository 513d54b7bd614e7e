"""CLI: htapsim-report <metrics.csv> --out <dir> [--format png|svg]."""

from __future__ import annotations

import argparse
import os
import sys

from .figures import ALL_FIGURES
from .records import ReportError


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="htapsim-report",
        description="Render comparison figures from an htapsim metrics CSV")
    parser.add_argument("metrics_csv", help="metrics.csv produced by htapsim")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--format", default="png", choices=("png", "svg"))
    args = parser.parse_args(argv)

    os.makedirs(args.out, exist_ok=True)
    written = []
    try:
        for name, plot in ALL_FIGURES:
            path = os.path.join(args.out, f"{name}.{args.format}")
            plot(args.metrics_csv, path)
            written.append(path)
    except ReportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
