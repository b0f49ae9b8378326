"""Command-line entry point: ``run``, ``sweep`` and ``plot``."""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config
from .harness import emit_plots, refine_sweep, run


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    result = run(cfg, args.out)
    for name, rep in result.report.items():
        mark = "pass" if rep["passed"] else "FAIL"
        strict = " strict" if rep["strict"] else ""
        print(f"{name:<14} {mark}  {rep['verdict']}{strict}")
    if result.error:
        print(f"error: {result.error}", file=sys.stderr)
    print(f"report: {result.paths['report']}")
    return result.exit_status


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    table = refine_sweep(cfg, args.levels, args.out)
    for row in table:
        order = "-" if row["order"] is None else f"{row['order']:.2f}"
        print(f"{row['check']:<14} order {order:>6}  {row['flag']}")
    return 0


def _cmd_plot(args) -> int:
    print(emit_plots(args.csv))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ricci-lab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run the configured checks")
    p.add_argument("config")
    p.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    p.set_defaults(func=_cmd_run)
    p = sub.add_parser("sweep", help="refinement sweep with observed orders")
    p.add_argument("config")
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_sweep)
    p = sub.add_parser("plot", help="write a gnuplot script for a run's CSV")
    p.add_argument("csv")
    p.set_defaults(func=_cmd_plot)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
