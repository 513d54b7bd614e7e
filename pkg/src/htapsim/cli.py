"""Command-line entry point.

    htapsim run <config>        one timed run; writes metrics.csv (+ commit log)
    htapsim isolation <config>  interference suite: each side alone vs together
    htapsim sweep <config> --param K --values a,b,c
    htapsim validate <config>   functional invariant suite only

Exit codes: 0 success, 1 config error, 2 invariant violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import harness
from .config import load_config
from .errors import ConfigError, HtapError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="htapsim",
        description="Desk-scale HTAP engine and modeled-hardware simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="path to config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override workload seed")
        p.add_argument("--mode", default=None,
                       choices=("shared", "dual_shared", "islands"),
                       help="override execution mode")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--format", default="csv", choices=("csv", "json"),
                       help="metrics output format")

    common(sub.add_parser("run", help="execute one timed run"))
    common(sub.add_parser("isolation", help="run the interference suite"))
    p_sweep = sub.add_parser("sweep", help="run once per parameter value")
    common(p_sweep)
    p_sweep.add_argument("--param", required=True, help="config key to vary")
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated values")
    common(sub.add_parser("validate", help="run the invariant suite only"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config,
                             overrides={"seed": args.seed, "mode": args.mode})
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    os.makedirs(args.out, exist_ok=True)
    try:
        if args.command == "run":
            report, system = harness.run_with_artifacts(config)
            reports = [report]
            _emit(reports, args)
            system.engine.export_commit_log_jsonl(
                os.path.join(args.out, "commitlog.jsonl"))
        elif args.command == "isolation":
            reports, retention = harness.run_isolation_suite(config)
            _emit(reports, args)
            for mode in retention:
                for side, value in retention[mode].items():
                    print(f"retention {mode} {side}: {value:.4f}")
        elif args.command == "sweep":
            values = [_parse_value(v) for v in args.values.split(",") if v]
            reports = harness.sweep(config, args.param, values)
            _emit(reports, args)
        elif args.command == "validate":
            problems = harness.run_invariant_suite(config)
            if problems:
                for p in problems:
                    print(f"violation: {p}", file=sys.stderr)
                return 2
            print("invariant suite: ok")
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except HtapError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 2
    return 0


def _parse_value(raw: str):
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            continue
    return raw


def _emit(reports, args) -> None:
    if args.format == "csv":
        path = os.path.join(args.out, "metrics.csv")
        harness.write_metrics_csv(reports, path)
    else:
        path = os.path.join(args.out, "metrics.json")
        with open(path, "w") as fh:
            json.dump([r.to_dict() for r in reports], fh, indent=2)
    print(f"wrote {path}")


if __name__ == "__main__":
    sys.exit(main())
