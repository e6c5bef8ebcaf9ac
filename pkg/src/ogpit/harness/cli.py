"""Command-line entry point: ``run``, ``profile`` and ``costcurve``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..errors import ConfigError
from .config import load_config
from .grid import atomic_write, read_traces, run_grid
from .profiles import cost_curves, cost_curves_csv, data_profile, profiles_csv


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    log = None if args.quiet else (lambda msg: print(msg, file=sys.stderr, flush=True))
    results = run_grid(cfg, args.out, force=args.force, jobs=args.jobs, log=log)
    failed = [c for c in results if c.status == "failed"]
    for c in failed:
        print(f"FAILED {c.file}: {c.error.splitlines()[0]}", file=sys.stderr)
    print(f"{len(results) - len(failed)} of {len(results)} cells ok; traces in {args.out}")
    return 1 if failed else 0


def _traces(directory):
    traces = read_traces(directory)
    if not traces:
        raise ConfigError(f"no trace files found in {directory}")
    return traces


def _cmd_profile(args) -> int:
    curves = data_profile(_traces(args.traces), args.gate)
    _write(args.out, profiles_csv(curves))
    return 0


def _cmd_costcurve(args) -> int:
    curves = cost_curves(_traces(args.traces))
    _write(args.out, cost_curves_csv(curves))
    return 0


def _write(out, text):
    if out == "-":
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        atomic_write(Path(out), text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ogpit", description="Noisy trust-region optimization experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment grid")
    p.add_argument("config", help="grid configuration file")
    p.add_argument("--out", required=True, help="output directory for trace CSVs")
    p.add_argument("--force", action="store_true", help="rerun cells that already completed")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    p.add_argument("--quiet", action="store_true", help="no per-cell progress lines")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("profile", help="data profile at one convergence gate")
    p.add_argument("--gate", type=float, required=True, help="tolerance tau, e.g. 1e-3")
    p.add_argument("--traces", required=True, help="directory of trace CSVs")
    p.add_argument("--out", required=True, help="output CSV path, or - for stdout")
    p.set_defaults(func=_cmd_profile)

    p = sub.add_parser("costcurve", help="regret against cost with 10/90%% bands")
    p.add_argument("--traces", required=True, help="directory of trace CSVs")
    p.add_argument("--out", required=True, help="output CSV path, or - for stdout")
    p.set_defaults(func=_cmd_costcurve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) is not None and getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
