"""Command line entry point: ``harborsim run | analyze | validate``.

Exit codes: 0 success, 2 invalid scenario or corrupt trace, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from harborsim import __version__
from harborsim.analytics import (DEFAULT_BIN_WIDTH, DEFAULT_CELL_SIZE, DEFAULT_THRESHOLD, IntegrityError,
                                 build_report, write_report)
from harborsim.simulation import Simulation
from harborsim.trace import TraceError, TraceWriter, read_trace
from harborsim.world import BUILTIN_SCENARIOS, Scenario, ScenarioError, builtin_scenario_text, load_scenario

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_IO = 3

log = logging.getLogger("harborsim")


def _read_scenario(ref: str) -> tuple[Scenario, str]:
    path = Path(ref)
    if not path.exists() and ref in BUILTIN_SCENARIOS:
        return load_scenario(builtin_scenario_text(ref)), f"builtin:{ref}"
    return load_scenario(path.read_text()), str(path)


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        sc, where = _read_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"cannot read scenario: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"{where}: ok ({len(sc.vehicles)} vehicles, {len(sc.rsus)} RSUs, {sc.duration:g} s, "
          f"{len(sc.dtn_jobs)} jobs)")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    try:
        sc, where = _read_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"cannot read scenario: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            print(f"invalid scenario: --seed {args.seed} outside the unsigned 64-bit range", file=sys.stderr)
            return EXIT_INVALID
        sc = dataclasses.replace(sc, seed=args.seed)

    out = Path(args.out)
    trace_path = out / "trace.jsonl"
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        with trace_path.open("w", encoding="utf-8", newline="\n") as fh:
            writer = TraceWriter(fh)
            result = Simulation(sc, writer).run()
        manifest = {
            "scenario": where,
            "seed": sc.seed,
            "version": __version__,
            "start_wall": started.isoformat(),
            "end_wall": datetime.now(timezone.utc).isoformat(),
            "elapsed_s": round(time.perf_counter() - t0, 3),
            "trace": str(trace_path),
            "trace_sha256": result.digest,
            "record_counts": dict(sorted(result.counts.items())),
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    log.info("wrote %s (%d records) in %.1f s", trace_path, sum(result.counts.values()),
             time.perf_counter() - t0)
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    trace_path = Path(args.trace)
    report_path = Path(args.report) if args.report else trace_path.with_name("report.json")
    try:
        trace = read_trace(trace_path)
    except TraceError as exc:
        print(f"corrupt trace {trace_path}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, UnicodeDecodeError) as exc:
        print(f"cannot read trace: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        report = build_report(trace, args.cell_size, args.bin_width, args.threshold)
    except (IntegrityError, ValueError) as exc:
        print(f"corrupt trace {trace_path}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        write_report(report, report_path)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    d = report["disconnection"]
    log.info("coverage %s; %d disconnections, %.1f%% within %g s", report["coverage"]["class_counts"],
             d["intervals"], 100 * d["fraction_within_threshold"], d["threshold"])
    return EXIT_OK


def _positive(text: str) -> float:
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="harborsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a scenario and write trace + manifest")
    p.add_argument("--scenario", required=True,
                   help=f"scenario JSON path, or a builtin name ({', '.join(BUILTIN_SCENARIOS)})")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", help="build the coverage/disconnection/rate report from a trace")
    p.add_argument("--trace", required=True, help="trace JSONL written by run")
    p.add_argument("--report", default=None, help="report JSON path (default: report.json beside the trace)")
    p.add_argument("--cell-size", type=_positive, default=DEFAULT_CELL_SIZE, help="grid cell size in m")
    p.add_argument("--bin-width", type=_positive, default=DEFAULT_BIN_WIDTH, help="histogram bin width in s")
    p.add_argument("--threshold", type=_positive, default=DEFAULT_THRESHOLD,
                   help="disconnection threshold in s")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("validate", help="check a scenario document")
    p.add_argument("--scenario", required=True, help="scenario JSON path or builtin name")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("HARBORSIM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
