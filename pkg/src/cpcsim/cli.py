"""Command-line entry point.

Subcommands:
  simulate <config.toml>   run a config-driven experiment
  align <a.csv> <b.csv>    align two RDMs (GW + RSA), print a report
  rdm <points.csv>         compute an RDM from a points table
  summarize <dir>          aggregate a finished run directory

Exit codes: 0 success, 1 usage/config error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ._version import __version__
from .alignment import (
    build_alignment_report,
    compute_rdm,
    load_rdm_csv,
    save_rdm_csv,
    save_report_json,
)
from .errors import NumericalError
from .experiments import (
    load_experiment_config,
    load_run_record,
    run_experiment,
    save_summary_csv,
    save_summary_json,
    summarize,
)

_METRIC_CHOICES = ("euclidean", "cosine")


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_common(parser) -> None:
    # SUPPRESS keeps subcommand-level flags from clobbering values parsed at
    # the top level when the flag is given before the subcommand
    parser.add_argument(
        "--seed",
        type=int,
        default=argparse.SUPPRESS,
        help="override the config/base seed",
    )
    parser.add_argument(
        "--output",
        default=argparse.SUPPRESS,
        help="output file or directory (command-dependent)",
    )
    parser.add_argument(
        "--quiet",
        action="store_true",
        default=argparse.SUPPRESS,
        help="suppress normal stdout reporting",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="cpcsim",
        description=(
            "Multi-agent naming-game simulator with representational "
            "alignment analysis"
        ),
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.set_defaults(seed=None, output=None, quiet=False)
    _add_common(parser)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p_sim = sub.add_parser(
        "simulate", help="run an experiment from a TOML config file"
    )
    p_sim.add_argument("config", help="path to the TOML config")
    _add_common(p_sim)
    p_sim.set_defaults(func=_cmd_simulate)

    p_align = sub.add_parser("align", help="align two RDM CSV files")
    p_align.add_argument("rdm_a", help="first RDM CSV")
    p_align.add_argument("rdm_b", help="second RDM CSV")
    p_align.add_argument(
        "--epsilon",
        type=float,
        default=None,
        help="entropic regularization (default: 0.02 x mean RDM entry)",
    )
    p_align.add_argument(
        "--n-init", type=int, default=3, help="number of GW restarts"
    )
    p_align.add_argument(
        "--supervised",
        action="store_true",
        help="treat row order as the true correspondence for RSA",
    )
    _add_common(p_align)
    p_align.set_defaults(func=_cmd_align)

    p_rdm = sub.add_parser("rdm", help="compute an RDM from a points CSV")
    p_rdm.add_argument("points", help="CSV of points, one row per stimulus")
    p_rdm.add_argument(
        "--metric", choices=_METRIC_CHOICES, default="euclidean"
    )
    _add_common(p_rdm)
    p_rdm.set_defaults(func=_cmd_rdm)

    p_sum = sub.add_parser(
        "summarize", help="summarize a run directory containing run_record.json"
    )
    p_sum.add_argument("run_dir", help="directory written by simulate")
    _add_common(p_sum)
    p_sum.set_defaults(func=_cmd_summarize)
    return parser


def _load_points_csv(path) -> np.ndarray:
    """Numeric CSV of points; a single non-numeric first row is a header."""
    with Path(path).open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ValueError(f"{path}: empty points file")
    start = 0
    try:
        [float(v) for v in rows[0]]
    except ValueError:
        start = 1
    data = [[float(v) for v in r] for r in rows[start:]]
    if not data:
        raise ValueError(f"{path}: no data rows")
    return np.array(data, dtype=float)


def _cmd_simulate(args) -> int:
    config = load_experiment_config(args.config)
    if args.seed is not None:
        config = replace(
            config,
            world=replace(config.world, seed=args.seed),
            game=replace(config.game, seed=args.seed),
        )
    if args.output is not None:
        config = replace(config, output_dir=args.output)
    record = run_experiment(config, quiet=args.quiet)
    if not args.quiet:
        report = summarize(record)
        for cond, metrics in report.per_condition.items():
            parts = [
                f"{name}={stats['mean']:.4f}" for name, stats in metrics.items()
            ]
            print(f"{cond}: " + (", ".join(parts) if parts else "(no metrics)"))
        if config.output_dir:
            print(f"outputs written to {config.output_dir}")
    return 0


def _cmd_align(args) -> int:
    a = load_rdm_csv(args.rdm_a)
    b = load_rdm_csv(args.rdm_b)
    report = build_alignment_report(
        a,
        b,
        epsilon=args.epsilon,
        n_init=args.n_init,
        seed=args.seed if args.seed is not None else 0,
        supervised=args.supervised,
    )
    if not args.quiet:
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    if args.output is not None:
        save_report_json(report, args.output)
    return 0


def _cmd_rdm(args) -> int:
    points = _load_points_csv(args.points)
    rdm = compute_rdm(points, metric=args.metric)
    if args.output is not None:
        save_rdm_csv(rdm, args.output)
        if not args.quiet:
            print(f"RDM written to {args.output}")
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(rdm.labels)
        for row in rdm.matrix:
            writer.writerow([repr(float(v)) for v in row])
    return 0


def _cmd_summarize(args) -> int:
    run_dir = Path(args.run_dir)
    record_path = run_dir / "run_record.json"
    if not record_path.exists():
        raise ValueError(f"{run_dir}: no run_record.json found")
    record = load_run_record(record_path)
    report = summarize(record)
    out_dir = Path(args.output) if args.output is not None else run_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    save_summary_json(report, out_dir / "summary.json")
    save_summary_csv(report, out_dir / "summary_long.csv")
    if not args.quiet:
        for cond, metrics in report.per_condition.items():
            parts = [
                f"{name}={stats['mean']:.4f}+/-{stats['std']:.4f}"
                for name, stats in metrics.items()
            ]
            print(f"{cond}: " + (", ".join(parts) if parts else "(no metrics)"))
        for c in report.contrasts:
            print(
                f"{c['metric']}: {c['condition_a']} vs {c['condition_b']} "
                f"U={c['u_statistic']:.1f} p={c['p_value']:.4g}"
            )
        print(f"summary written to {out_dir}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse --help exits 0; usage errors exit 1 via _Parser.error
        return int(exc.code or 0)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"cpcsim: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, OSError) as exc:
        print(f"cpcsim: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
