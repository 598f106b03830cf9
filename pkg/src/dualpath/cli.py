"""Scenario runner CLI.

    dualpath run CONFIG [--override k=v ...] [--seeds A..B] [--out DIR]
                 [--format json,csv]

Per seed it writes ``metrics-<seed>.json``, ``trace-<seed>.csv`` and
``linkability-<seed>.csv``; a seed sweep additionally writes
``summary.csv``. Exit codes: 0 success, 1 run failure (a ``FAILED`` marker
is left next to any partial outputs), 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import statistics
import sys
from dataclasses import replace
from typing import Optional

from .analysis import colluder_candidates, observer_candidates
from .config import ConfigError, parse_config
from .simnet import COMPLETED, Metrics, Trace, run_scenario

EXIT_OK = 0
EXIT_RUN_FAILURE = 1
EXIT_USAGE = 2

METRICS_CSV_HEADER = ("cycles_attempted,cycles_completed,cycles_failed,"
                      "mean_transmissions_per_cycle,asymmetric_seals,"
                      "symmetric_seals,median_anonymity_colluders,"
                      "median_anonymity_observer,statistical_intersection_mean,"
                      "directory_convergence_lag")


def _median(values: list[int]) -> float:
    return float(statistics.median(values)) if values else 0.0


def format_report(metrics: Metrics, fmt: str) -> str:
    """Render metrics; json output round-trips through parse_report."""
    if fmt == "json":
        return json.dumps(metrics.to_dict(), indent=2, sort_keys=False) + "\n"
    if fmt == "csv":
        row = [metrics.cycles_attempted, metrics.cycles_completed,
               metrics.cycles_failed, metrics.mean_transmissions_per_cycle,
               metrics.asymmetric_seals, metrics.symmetric_seals,
               _median(metrics.anonymity_colluders),
               _median(metrics.anonymity_observer),
               "" if metrics.statistical_intersection_mean is None
               else metrics.statistical_intersection_mean,
               metrics.directory_convergence_lag]
        return METRICS_CSV_HEADER + "\n" + ",".join(str(v) for v in row) + "\n"
    raise ValueError("unknown report format %r" % fmt)


def parse_report(text: str) -> Metrics:
    return Metrics.from_dict(json.loads(text))


def linkability_csv(trace: Trace) -> str:
    lines = ["cycle,requester,provider,candidates_colluders,candidates_observer"]
    for record in trace.cycles:
        if record.status != COMPLETED:
            continue
        content = colluder_candidates(trace, trace.colluders, record.index)
        full = content
        if trace.observer_enabled:
            full = content & observer_candidates(trace, record.index)
        lines.append("%d,%d,%d,%d,%d" % (record.index, record.requester,
                                         record.provider, len(content), len(full)))
    return "\n".join(lines) + "\n"


def _parse_seeds(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        start, end = int(lo), int(hi)
        if end < start:
            raise ValueError("empty seed range %s" % text)
        return list(range(start, end + 1))
    return [int(text)]


def _write(path: str, content: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(content)


def _run(args: argparse.Namespace) -> int:
    try:
        base = parse_config(args.config, args.override or [])
        seeds = _parse_seeds(args.seeds) if args.seeds else None
        formats = [f.strip() for f in args.format.split(",") if f.strip()]
        for fmt in formats:
            if fmt not in ("json", "csv"):
                raise ValueError("unknown format %r" % fmt)
    except (ConfigError, ValueError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE

    out_dir = args.out or os.environ.get("DUALPATH_OUT") or "."
    os.makedirs(out_dir, exist_ok=True)
    sweep = seeds is not None
    summary_rows = []
    for seed in (seeds if sweep else [base.seed]):
        config = replace(base, seed=seed)
        try:
            metrics, trace = run_scenario(config)
        except Exception as exc:  # noqa: BLE001 - any run failure ends the sweep
            _write(os.path.join(out_dir, "FAILED"),
                   "seed %d: %s\n" % (seed, exc))
            print("error: run for seed %d failed: %s" % (seed, exc),
                  file=sys.stderr)
            return EXIT_RUN_FAILURE
        _write(os.path.join(out_dir, "metrics-%d.json" % seed),
               format_report(metrics, "json"))
        if "csv" in formats:
            _write(os.path.join(out_dir, "metrics-%d.csv" % seed),
                   format_report(metrics, "csv"))
        _write(os.path.join(out_dir, "trace-%d.csv" % seed), trace.to_csv())
        _write(os.path.join(out_dir, "linkability-%d.csv" % seed),
               linkability_csv(trace))
        fraction = (metrics.cycles_completed / metrics.cycles_attempted
                    if metrics.cycles_attempted else 0.0)
        summary_rows.append("%d,%d,%d,%s,%s"
                            % (seed, metrics.cycles_attempted,
                               metrics.cycles_completed, fraction,
                               _median(metrics.anonymity_colluders)))
    if sweep:
        _write(os.path.join(out_dir, "summary.csv"),
               "seed,cycles_attempted,cycles_completed,completion_fraction,"
               "median_anonymity_colluders\n" + "\n".join(summary_rows) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualpath",
        description="Run dual-path relay scenarios and write metrics, "
                    "traces and linkability reports.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute one scenario or a seed sweep")
    run.add_argument("config", help="path to a JSON scenario config")
    run.add_argument("--override", action="append", metavar="KEY=VALUE",
                     help="override a config field (dotted keys, repeatable)")
    run.add_argument("--seeds", metavar="A..B",
                     help="inclusive seed range; runs one scenario per seed")
    run.add_argument("--out", metavar="DIR",
                     help="output directory (default: $DUALPATH_OUT or .)")
    run.add_argument("--format", default="json", metavar="LIST",
                     help="metrics report formats: json,csv (default json)")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if args.command == "run":
        return _run(args)
    parser.print_usage(sys.stderr)
    return EXIT_USAGE


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
