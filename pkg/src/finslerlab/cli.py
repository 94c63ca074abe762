"""Command-line front end: ``finslerlab run|validate|schema``."""
from __future__ import annotations

import argparse
import json
import os
import sys

from .config import load_config
from .errors import ConfigError
from .report import report_schema

OUT_ENV = "FINSLERLAB_OUT"


def _parser():
    ap = argparse.ArgumentParser(prog="finslerlab", description="Finsler inequality bench")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario and write report.json, summary.csv and plot data")
    run.add_argument("config")
    run.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or out/<scenario>)")
    run.add_argument("--threads", type=int, default=1, help="checker-level worker threads")
    run.add_argument("--seed", type=int, help="override the scenario seed")
    val = sub.add_parser("validate", help="parse and validate a scenario")
    val.add_argument("config")
    sub.add_parser("schema", help="print the report.json schema")
    return ap


def _problems(e):
    for key, line, reason in e.problems:
        yield f"{key or '-'}:{line or '-'}: {reason}"


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.command == "schema":
        json.dump(report_schema(), sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
        return 0
    try:
        sc = load_config(args.config)
    except ConfigError as e:
        print(f"{type(e).__name__} in {args.config}", file=sys.stderr)
        for line in _problems(e):
            print(f"  {line}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"cannot read {args.config}: {e}", file=sys.stderr)
        return 2
    if args.command == "validate":
        print(f"{args.config}: ok (scenario {sc.name!r}, task {sc.task})")
        return 0
    from .pipeline import run_scenario

    if args.seed is not None:
        sc.seed = args.seed
    if args.threads < 1:
        print("--threads must be >= 1", file=sys.stderr)
        return 2
    out = args.out or os.environ.get(OUT_ENV) or sc.out or os.path.join("out", sc.name)
    status, doc = run_scenario(sc, out, threads=args.threads)
    for r in doc["reports"]:
        print(f"{r['name']:<24} {r['verdict']:<13} constant={r['empirical_constant']}")
    for e in doc["errors"]:
        print(f"{e['check']:<24} error         {e['error']}: {e['message']}")
    print(f"wrote {out}/report.json and {out}/summary.csv (exit {status})")
    return status


if __name__ == "__main__":
    sys.exit(main())
