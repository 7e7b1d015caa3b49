"""Command line entry point: ``simulate``, ``analyze`` and ``report``."""

from __future__ import annotations

import argparse
import sys

from .cohort import CohortError
from .pipeline import (EXIT_CONFIG, EXIT_DATA, EXIT_OK, EXIT_RUN, ConfigError, PipelineError,
                       load_config, report, run_pipeline)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpmmrdd",
        description="Cluster-based unit selection for fuzzy regression discontinuity designs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, run=True):
        p.add_argument("--config", metavar="PATH", help="key = value configuration file")
        p.add_argument("--out", metavar="DIR", help="output directory")
        if run:
            p.add_argument("--seed", type=int, metavar="U64", help="master seed")
            p.add_argument("--reps", type=int, metavar="N", help="number of replicates")
            p.add_argument("--threads", type=int, metavar="N", help="parallel worker processes")

    common(sub.add_parser("simulate", help="simulate cohorts and run the full comparison"))
    p_an = sub.add_parser("analyze", help="run the comparison on cohort CSV input")
    common(p_an)
    p_an.add_argument("--input", metavar="PATH",
                      help="cohort CSV, a directory of rep_<r>.csv files, or 'bundled'")
    common(sub.add_parser("report", help="re-pool saved draws into the comparison table"),
           run=False)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            if args.config:
                cfg = load_config(args.config, {"out": args.out})
                out = args.out or cfg.out
            else:
                cfg, out = None, args.out or "results"
            table = report(out, cfg)
        else:
            overrides = {"mode": args.command, "out": args.out, "seed": args.seed,
                         "reps": args.reps, "threads": args.threads,
                         "input": getattr(args, "input", None)}
            cfg = load_config(args.config, overrides)
            table = run_pipeline(cfg).table
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CohortError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except PipelineError as exc:
        print(f"run error: {exc}", file=sys.stderr)
        return EXIT_RUN
    print(table.format())
    return EXIT_OK
