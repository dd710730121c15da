"""Offline analysis of run traces: coverage grid, disconnection intervals,
effective transfer rates and interface usage."""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from harborsim.connman import CONNECT, DISCONNECT
from harborsim.dtn import COMPLETED, FALLBACK_COMPLETED, interface_accounting
from harborsim.trace import Trace, read_trace

DIRECT = "direct"
MULTI_HOP = "multi_hop"
UNCOVERED = "uncovered"
NO_DATA = "no_data"
CLASS_CODES = {DIRECT: "D", MULTI_HOP: "M", UNCOVERED: "U", NO_DATA: "."}

DEFAULT_CELL_SIZE = 50.0
DEFAULT_BIN_WIDTH = 60.0
DEFAULT_THRESHOLD = 300.0


class IntegrityError(ValueError):
    """Connectivity events that do not alternate disconnect/connect."""


def classify(observations: int, direct: int, multihop: int) -> str:
    if observations == 0:
        return NO_DATA
    connected = direct + multihop
    if connected == 0:
        return UNCOVERED
    return DIRECT if 2 * direct >= connected else MULTI_HOP


@dataclass
class CoverageGrid:
    cell_size: float
    origin: tuple[float, float]
    observations: np.ndarray  # [row (y), col (x)]
    direct_count: np.ndarray
    multihop_count: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.observations.shape

    def cell_class(self, row: int, col: int) -> str:
        return classify(int(self.observations[row, col]), int(self.direct_count[row, col]),
                        int(self.multihop_count[row, col]))

    @property
    def classes(self) -> list[list[str]]:
        rows, cols = self.shape
        return [[self.cell_class(r, c) for c in range(cols)] for r in range(rows)]

    def class_counts(self) -> dict[str, int]:
        c = Counter(x for row in self.classes for x in row)
        return {k: c.get(k, 0) for k in (DIRECT, MULTI_HOP, UNCOVERED, NO_DATA)}


def grid_shape(bounds: Mapping[str, float], cell_size: float) -> tuple[int, int]:
    cols = max(1, math.ceil((bounds["x_max"] - bounds["x_min"]) / cell_size - 1e-9))
    rows = max(1, math.ceil((bounds["y_max"] - bounds["y_min"]) / cell_size - 1e-9))
    return rows, cols


def cell_of(x: float, y: float, bounds: Mapping[str, float], cell_size: float) -> tuple[int, int]:
    rows, cols = grid_shape(bounds, cell_size)
    col = min(max(int((x - bounds["x_min"]) // cell_size), 0), cols - 1)
    row = min(max(int((y - bounds["y_min"]) // cell_size), 0), rows - 1)
    return row, col


def coverage_grid(trace: Trace, cell_size: float = DEFAULT_CELL_SIZE) -> CoverageGrid:
    """Bin every vehicle position sample with its gateway hop count."""
    if cell_size <= 0:
        raise ValueError("cell_size must be > 0")
    bounds = trace.start["map_bounds"]
    rows, cols = grid_shape(bounds, cell_size)
    obs = np.zeros((rows, cols), dtype=int)
    direct = np.zeros((rows, cols), dtype=int)
    multi = np.zeros((rows, cols), dtype=int)
    hops = {(r["t"], r["node"]): r["hop_count"] for r in trace["reachability"]}
    for p in trace["position"]:
        key = (p["t"], p["node"])
        if key not in hops:
            raise ValueError(f"position of {p['node']} at t={p['t']} has no reachability record")
        row, col = cell_of(p["x"], p["y"], bounds, cell_size)
        obs[row, col] += 1
        h = hops[key]
        if h == 1:
            direct[row, col] += 1
        elif h is not None:
            multi[row, col] += 1
    return CoverageGrid(cell_size, (bounds["x_min"], bounds["y_min"]), obs, direct, multi)


@dataclass
class DisconnectionHistogram:
    bin_width: float
    edges: list[float]
    counts: list[int]
    intervals: list[float]
    total_time: float
    threshold: float

    def fraction_within(self, threshold: float | None = None) -> tuple[float, float]:
        """(count-weighted, time-weighted) share of intervals no longer than threshold."""
        th = self.threshold if threshold is None else threshold
        if not self.intervals:
            return 1.0, 1.0
        short = [d for d in self.intervals if d <= th]
        by_count = len(short) / len(self.intervals)
        if self.total_time <= 0:
            return by_count, 1.0
        long_time = sum(d for d in self.intervals if d > th)
        return by_count, min(max(1.0 - long_time / self.total_time, 0.0), 1.0)

    @property
    def count_fraction(self) -> float:
        return self.fraction_within()[0]

    @property
    def time_fraction(self) -> float:
        return self.fraction_within()[1]

    @property
    def disconnected_time(self) -> float:
        return sum(self.intervals)


def _kind_t(ev: Any) -> tuple[str, float]:
    if isinstance(ev, Mapping):
        return ev["kind"], ev["t"]
    return ev.kind, ev.t


def disconnection_intervals(events: Iterable[Any], end: float) -> list[float]:
    """Durations of disconnect->connect pairs; an open interval closes at `end`."""
    out: list[float] = []
    opened: float | None = None
    expect = DISCONNECT
    for ev in events:
        kind, t = _kind_t(ev)
        if kind != expect:
            raise IntegrityError(f"expected {expect} at t={t}, got {kind}")
        if kind == DISCONNECT:
            opened = t
            expect = CONNECT
        else:
            out.append(t - opened)
            opened = None
            expect = DISCONNECT
    if opened is not None:
        out.append(end - opened)
    return out


def histogram_from_intervals(intervals: Sequence[float], bin_width: float, total_time: float,
                             threshold: float = DEFAULT_THRESHOLD) -> DisconnectionHistogram:
    if bin_width <= 0:
        raise ValueError("bin_width must be > 0")
    nbins = max(1, math.ceil(max(intervals, default=0.0) / bin_width - 1e-9))
    edges = [i * bin_width for i in range(nbins + 1)]
    counts, _ = np.histogram(np.asarray(intervals, dtype=float), bins=np.asarray(edges))
    return DisconnectionHistogram(bin_width, edges, [int(c) for c in counts], list(intervals),
                                  total_time, threshold)


def disconnection_histogram(events_by_node: Mapping[str, Iterable[Any]], bin_width: float = DEFAULT_BIN_WIDTH,
                            threshold: float = DEFAULT_THRESHOLD, start: float = 0.0,
                            end: float | None = None) -> DisconnectionHistogram:
    """Histogram of disconnection durations over all nodes.

    Every key of `events_by_node` counts toward total observed time, even
    nodes that never disconnected.
    """
    if end is None:
        end = max((_kind_t(e)[1] for evs in events_by_node.values() for e in evs), default=start)
    intervals: list[float] = []
    for node in sorted(events_by_node):
        try:
            intervals += disconnection_intervals(events_by_node[node], end)
        except IntegrityError as exc:
            raise IntegrityError(f"node {node}: {exc}") from None
    return histogram_from_intervals(intervals, bin_width, len(events_by_node) * (end - start), threshold)


def trace_histogram(trace: Trace, bin_width: float = DEFAULT_BIN_WIDTH,
                    threshold: float = DEFAULT_THRESHOLD) -> DisconnectionHistogram:
    by_node: dict[str, list] = {v: [] for v in trace.start["vehicles"]}
    for e in trace["event"]:
        by_node.setdefault(e["node"], []).append(e)
    return disconnection_histogram(by_node, bin_width, threshold, trace.start["t"], trace.end["t"])


@dataclass
class RateSummary:
    per_job: dict[str, float]
    aggregate: float
    total_bytes: int
    span: float


def effective_rate(jobs: Iterable[Mapping[str, Any]]) -> RateSummary:
    """Bits/s per finished job and over the span of all finished jobs.

    Rates include disconnected time: elapsed is completion minus creation.
    """
    done = [j for j in jobs if j["state"] in (COMPLETED, FALLBACK_COMPLETED)]
    per_job = {}
    for j in done:
        per_job[j["job"]] = 8.0 * j["size"] / (j["completed"] - j["created"])
    if not done:
        return RateSummary({}, 0.0, 0, 0.0)
    total = sum(j["size"] for j in done)
    span = max(j["completed"] for j in done) - min(j["created"] for j in done)
    return RateSummary(per_job, 8.0 * total / span, total, span)


def interface_usage(trace: Trace) -> dict[str, float]:
    """Share of choice samples per selected interface."""
    c = Counter(r["choice"] for r in trace["choice"])
    n = sum(c.values())
    return {k: c[k] / n for k in sorted(c)} if n else {}


def build_report(trace: Trace, cell_size: float = DEFAULT_CELL_SIZE, bin_width: float = DEFAULT_BIN_WIDTH,
                 threshold: float = DEFAULT_THRESHOLD) -> dict[str, Any]:
    grid = coverage_grid(trace, cell_size)
    hist = trace_histogram(trace, bin_width, threshold)
    jobs = trace["job"]
    rates = effective_rate(jobs)
    acct = interface_accounting(trace["transfer"])
    by_count, by_time = hist.fraction_within()
    probes = trace["probe"]
    return {
        "run": {"seed": trace.start.get("seed"), "duration": trace.duration,
                "vehicles": len(trace.start["vehicles"]), "rsus": [r["id"] for r in trace.start["rsus"]]},
        "coverage": {
            "cell_size": cell_size,
            "origin": list(grid.origin),
            "shape": list(grid.shape),
            "legend": {v: k for k, v in CLASS_CODES.items()},
            "classes": ["".join(CLASS_CODES[c] for c in row) for row in grid.classes],
            "observations": grid.observations.tolist(),
            "direct_count": grid.direct_count.tolist(),
            "multihop_count": grid.multihop_count.tolist(),
            "class_counts": grid.class_counts(),
        },
        "disconnection": {
            "bin_width": bin_width,
            "threshold": threshold,
            "edges": hist.edges,
            "counts": hist.counts,
            "intervals": len(hist.intervals),
            "disconnected_time": hist.disconnected_time,
            "observed_time": hist.total_time,
            "fraction_within_threshold": by_count,
            "fraction_within_threshold_time_weighted": by_time,
        },
        "rates": {
            "aggregate_bps": rates.aggregate,
            "total_bytes": rates.total_bytes,
            "span": rates.span,
            "jobs": [{"job": j["job"], "node": j["node"], "direction": j.get("direction"), "state": j["state"],
                      "size": j["size"], "created": j["created"], "completed": j.get("completed"),
                      "makespan": j.get("makespan"), "ledger": j.get("ledger", {}),
                      "rate_bps": rates.per_job.get(j["job"])}
                     for j in sorted(jobs, key=lambda j: j["job"])],
        },
        "interfaces": {"bytes": acct.by_interface, "rsu_load": acct.by_rsu,
                       "choice_share": interface_usage(trace)},
        "probes": {
            "samples": len(probes),
            "median_capacity": float(np.median([p["capacity"] for p in probes])) if probes else None,
            "median_avail_bw": float(np.median([p["avail_bw"] for p in probes])) if probes else None,
            "median_rtt": float(np.median([p["rtt"] for p in probes])) if probes else None,
        },
    }


def write_report(report: dict[str, Any], path: str | Path) -> list[Path]:
    """Write the JSON report plus coverage/histogram/rates CSVs next to it."""
    path = Path(path)
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    stem = path.with_suffix("")
    written = [path]

    cov = report["coverage"]
    p = Path(f"{stem}_coverage.csv")
    with p.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "col", "x0", "y0", "class", "observations", "direct_count", "multihop_count"])
        inv = cov["legend"]
        for r, line in enumerate(cov["classes"]):
            for c, code in enumerate(line):
                w.writerow([r, c, cov["origin"][0] + c * cov["cell_size"], cov["origin"][1] + r * cov["cell_size"],
                            inv[code], cov["observations"][r][c], cov["direct_count"][r][c],
                            cov["multihop_count"][r][c]])
    written.append(p)

    hist = report["disconnection"]
    p = Path(f"{stem}_histogram.csv")
    with p.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_start", "bin_end", "count"])
        for a, b, n in zip(hist["edges"], hist["edges"][1:], hist["counts"]):
            w.writerow([a, b, n])
    written.append(p)

    p = Path(f"{stem}_rates.csv")
    with p.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["job", "node", "direction", "state", "size", "created", "completed", "rate_bps"])
        for j in report["rates"]["jobs"]:
            w.writerow([j["job"], j["node"], j["direction"], j["state"], j["size"], j["created"],
                        j["completed"], j["rate_bps"]])
    written.append(p)
    return written


def analyze(trace_path: str | Path, report_path: str | Path, cell_size: float = DEFAULT_CELL_SIZE,
            bin_width: float = DEFAULT_BIN_WIDTH, threshold: float = DEFAULT_THRESHOLD) -> dict[str, Any]:
    report = build_report(read_trace(trace_path), cell_size, bin_width, threshold)
    write_report(report, report_path)
    return report
