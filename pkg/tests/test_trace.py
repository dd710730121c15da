from __future__ import annotations

import hashlib
import io

import pytest

from conftest import parse_text

from harborsim.trace import TraceError, TraceWriter, dumps, read_trace

START = {"type": "meta", "kind": "start", "t": 0.0, "vehicles": ["v"], "rsus": [],
         "map_bounds": {"x_min": 0, "y_min": 0, "x_max": 10, "y_max": 10}}
END = {"type": "meta", "kind": "end", "t": 2.0}


def text_of(*recs) -> str:
    return "".join(dumps(r) + "\n" for r in recs)


def test_writer_counts_and_digest():
    buf = io.StringIO()
    w = TraceWriter(buf)
    for r in (START, {"type": "event", "t": 1.0, "node": "v", "kind": "disconnect"}, END):
        w.write(r)
    assert w.counts == {"meta": 2, "event": 1}
    assert w.digest == hashlib.sha256(buf.getvalue().encode()).hexdigest()


def test_round_trip():
    ev = {"type": "event", "t": 1.0, "node": "v", "kind": "disconnect"}
    tr = parse_text(text_of(START, ev, END))
    assert tr["event"] == [ev] and tr["position"] == [] and tr.duration == 2.0


def test_non_finite_values_refused():
    with pytest.raises(ValueError):
        dumps({"type": "probe", "t": float("nan")})


@pytest.mark.parametrize("text,line,needle", [
    (text_of(START, END)[:-1], 2, "truncated"),
    (text_of(START) + "{not json\n" + text_of(END), 2, "malformed"),
    (text_of(START, {"type": "gossip", "t": 1.0}, END), 2, "unknown record type"),
    (text_of(START, {"type": "event", "t": 1.0, "node": "v"}, END), 2, "missing kind"),
    (text_of(START, {"type": "event", "t": 3.0, "node": "v", "kind": "connect"},
             {"type": "event", "t": 1.0, "node": "v", "kind": "connect"}, END), 3, "backwards"),
    (text_of(START), 2, "no end-of-run"),
    (text_of(START, END, {"type": "event", "t": 2.0, "node": "v", "kind": "connect"}), 3, "after end"),
    (text_of({"type": "event", "t": 0.0, "node": "v", "kind": "connect"}, START, END), 1, "before start"),
    ("", 1, "empty"),
])
def test_corrupt_traces_name_the_line(text, line, needle):
    with pytest.raises(TraceError) as exc:
        parse_text(text)
    assert exc.value.line == line and needle in str(exc.value)


def test_read_trace_from_disk(tmp_path, small_run):
    text, result = small_run
    p = tmp_path / "trace.jsonl"
    p.write_text(text)
    tr = read_trace(p)
    for kind, n in result.counts.items():
        if kind != "meta":
            assert len(tr[kind]) == n
    # the end marker counts everything written before itself
    assert tr.end["counts"] == {**result.counts, "meta": 1}
