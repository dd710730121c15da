"""Line-delimited JSON trace: one record per line, discriminated by "type"."""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any, Iterator

RECORD_TYPES = ("meta", "position", "reachability", "choice", "event", "transfer", "probe",
                "control", "job")

_REQUIRED = {
    "meta": ("kind", "t"),
    "position": ("t", "node", "x", "y"),
    "reachability": ("t", "node", "hop_count", "gateway"),
    "choice": ("t", "node", "choice", "score", "hop_count"),
    "event": ("t", "node", "kind"),
    "transfer": ("t", "node", "job", "interface", "bytes", "rate"),
    "probe": ("t", "link", "capacity", "avail_bw", "avail_bw_lossy", "rtt", "jitter", "rssi", "pdr"),
    "control": ("t", "node", "kind", "detail"),
    "job": ("t", "node", "job", "state", "size", "created"),
}


class TraceError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def dumps(record: dict[str, Any]) -> str:
    return json.dumps(record, separators=(",", ":"), allow_nan=False)


class TraceWriter:
    """Writes records to a text stream while counting types and hashing the bytes."""

    def __init__(self, stream: IO[str] | None = None):
        self.stream = stream
        self.counts: Counter[str] = Counter()
        self._sha = hashlib.sha256()

    def write(self, record: dict[str, Any]) -> None:
        line = dumps(record) + "\n"
        self.counts[record["type"]] += 1
        self._sha.update(line.encode())
        if self.stream is not None:
            self.stream.write(line)

    @property
    def digest(self) -> str:
        return self._sha.hexdigest()


@dataclass
class Trace:
    """A parsed trace, records grouped by type in file order."""

    start: dict[str, Any]
    end: dict[str, Any]
    records: dict[str, list[dict[str, Any]]] = field(default_factory=dict)

    def __getitem__(self, kind: str) -> list[dict[str, Any]]:
        return self.records.get(kind, [])

    @property
    def duration(self) -> float:
        return self.end["t"] - self.start["t"]


def iter_records(lines: Iterator[str]) -> Iterator[tuple[int, dict[str, Any]]]:
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if not line.endswith("\n"):
            # A final line without its terminator was cut short.
            raise TraceError(lineno, "truncated record (no line terminator)")
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceError(lineno, f"malformed JSON ({exc.msg})") from None
        if not isinstance(rec, dict) or rec.get("type") not in RECORD_TYPES:
            raise TraceError(lineno, f"unknown record type {rec.get('type') if isinstance(rec, dict) else rec!r}")
        missing = [k for k in _REQUIRED[rec["type"]] if k not in rec]
        if missing:
            raise TraceError(lineno, f"{rec['type']} record missing {', '.join(missing)}")
        yield lineno, rec


def parse_trace(lines: Iterator[str]) -> Trace:
    start = end = None
    records: dict[str, list[dict[str, Any]]] = {}
    last_t = float("-inf")
    lineno = 0
    for lineno, rec in iter_records(lines):
        if end is not None:
            raise TraceError(lineno, "record after end-of-run marker")
        if not isinstance(rec["t"], (int, float)):
            raise TraceError(lineno, f"non-numeric timestamp {rec['t']!r}")
        if rec["t"] < last_t:
            raise TraceError(lineno, f"timestamp {rec['t']} goes backwards")
        last_t = rec["t"]
        if rec["type"] == "meta":
            if rec["kind"] == "start":
                if start is not None:
                    raise TraceError(lineno, "duplicate start marker")
                start = rec
            elif rec["kind"] == "end":
                end = rec
            continue
        if start is None:
            raise TraceError(lineno, "record before start-of-run marker")
        records.setdefault(rec["type"], []).append(rec)
    if start is None:
        raise TraceError(lineno + 1, "empty trace (no start marker)")
    if end is None:
        raise TraceError(lineno + 1, "truncated trace (no end-of-run marker)")
    return Trace(start, end, records)


def read_trace(path: str | Path) -> Trace:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return parse_trace(iter(fh))
