from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fuzz import dtn_conservation_case, dtn_fallback_case

from harborsim.dtn import (ACTIVE, CELLULAR, COMPLETED, FAILED_DEADLINE, FALLBACK_COMPLETED, QUEUED, SUSPENDED,
                           QueueError, TransferJob, TransferLogRecord, TransferQueue, deadline_fallback, enqueue,
                           interface_accounting, tick_transfer)

MB = 1_000_000
Mb = 1_000_000 / 8  # bytes per megabit


def q_with(*jobs: TransferJob) -> TransferQueue:
    q = TransferQueue("v")
    for j in jobs:
        enqueue(q, j)
    return q


def test_higher_priority_first():
    q = q_with(TransferJob("low", 10, priority=1), TransferJob("high", 10, priority=5))
    assert q.head.job_id == "high"


def test_equal_priority_earlier_first():
    q = q_with(TransferJob("late", 10, 1, created=5.0), TransferJob("early", 10, 1, created=2.0))
    assert q.head.job_id == "early"


def test_enqueue_rejections():
    with pytest.raises(QueueError):
        q_with(TransferJob("z", 0))
    with pytest.raises(QueueError):
        q_with(TransferJob("a", 5), TransferJob("a", 6))
    with pytest.raises(QueueError):
        q_with(TransferJob("d", 5, created=10.0, deadline=10.0))


def test_default_deadline():
    assert TransferJob("a", 5, created=100.0).deadline == 1900.0


def test_connected_tick_progress():
    q = q_with(TransferJob("a", int(10 * Mb)))
    q, recs = tick_transfer(q, True, 2e6, 1.0, 0.0)
    assert len(recs) == 1 and recs[0].bytes == int(2 * Mb)
    assert q.head.bytes_done == int(2 * Mb) and q.head.state == ACTIVE


def test_disconnected_tick_suspends():
    q = q_with(TransferJob("a", 1000))
    q.tick_transfer(True, 800.0, 1.0, 0.0)
    q, recs = tick_transfer(q, False, 2e6, 1.0, 1.0)
    assert recs == [] and q.head.bytes_done == 100 and q.head.state == SUSPENDED
    q.tick_transfer(True, 800.0, 1.0, 2.0)
    assert q.head.bytes_done == 200


def test_budget_carries_to_next_job():
    q = q_with(TransferJob("a", int(Mb), priority=2), TransferJob("b", int(5 * Mb), priority=1))
    recs = q.tick_transfer(True, 2e6, 1.0, 0.0)
    assert [(r.job_id, r.bytes) for r in recs] == [("a", int(Mb)), ("b", int(Mb))]
    a, b = q.jobs
    assert a.state == COMPLETED and a.completed_at == 1.0
    assert b.bytes_done == int(Mb)


def test_leftover_credit_does_not_bank():
    q = q_with(TransferJob("a", 10))
    q.tick_transfer(True, 8000.0, 1.0, 0.0)
    q.enqueue(TransferJob("b", 10_000, created=1.0))
    recs = q.tick_transfer(True, 80.0, 1.0, 1.0)
    assert recs[0].bytes == 10


def test_fractional_credit_accumulates():
    q = q_with(TransferJob("a", 1000))
    for k in range(10):
        q.tick_transfer(True, 1.0, 1.0, float(k))  # 1/8 byte per tick
    assert q.head.bytes_done == 1


def test_realtime_only_serves_realtime_jobs():
    q = q_with(TransferJob("bulk", 1000, priority=9), TransferJob("rt", 1000, priority=1, realtime=True))
    recs = q.tick_transfer(True, 8000.0, 0.5, 0.0, CELLULAR, realtime_only=True)
    assert [r.job_id for r in recs] == ["rt"] and recs[0].gateway is None
    bulk = next(j for j in q if j.job_id == "bulk")
    assert bulk.state == SUSPENDED and bulk.bytes_done == 0


def test_deadline_remainder_goes_cellular():
    job = TransferJob("a", 11 * MB, deadline=100.0)
    q = q_with(job)
    q.tick_transfer(True, 8 * MB * 8, 1.0, 0.0)
    assert job.bytes_done == 8 * MB
    q, recs = deadline_fallback(q, 100.0, 1e9, 1.0)
    assert job.state == FALLBACK_COMPLETED
    assert job.ledger == {"dsrc": 8 * MB, CELLULAR: 3 * MB}
    assert sum(r.bytes for r in recs) == 3 * MB


def test_completed_or_early_jobs_untouched():
    done = TransferJob("done", 10, deadline=5.0)
    early = TransferJob("early", 10_000, deadline=50.0)
    q = q_with(done, early)
    q.tick_transfer(True, 80.0, 1.0, 0.0)
    assert done.state == COMPLETED
    q.deadline_fallback(10.0, 1e6, 1.0)
    assert done.ledger.get(CELLULAR, 0) == 0
    assert early.state in (QUEUED, ACTIVE) and early.ledger.get(CELLULAR, 0) == 0


def test_fallback_without_cellular_fails_job():
    job = TransferJob("a", 100, deadline=1.0)
    q = q_with(job)
    q.deadline_fallback(1.0, 1e6, 0.1, cellular_enabled=False)
    assert job.state == FAILED_DEADLINE
    assert q.tick_transfer(True, 1e6, 0.1, 1.0) == []


def test_accounting_examples():
    recs = [TransferLogRecord(0, "j", "dsrc", 5 * MB, 1e6, "r1"), TransferLogRecord(1, "j", CELLULAR, MB, 1e6)]
    acct = interface_accounting(recs)
    assert acct.by_interface == {"dsrc": 5 * MB, "wifi": 0, CELLULAR: MB} and acct.total == 6 * MB
    empty = interface_accounting([])
    assert empty.total == 0 and empty.by_rsu == {} and set(empty.by_interface.values()) == {0}


def test_accounting_per_rsu_matches_hand_fold():
    recs = [{"interface": "dsrc", "bytes": 100, "gateway": "r1"}, {"interface": "wifi", "bytes": 40, "gateway": "r2"},
            {"interface": "dsrc", "bytes": 7, "gateway": "r2"}, {"interface": CELLULAR, "bytes": 9, "gateway": None}]
    want: dict[str, int] = {}
    for r in recs:
        if r["gateway"]:
            want[r["gateway"]] = want.get(r["gateway"], 0) + r["bytes"]
    assert interface_accounting(recs).by_rsu == want == {"r1": 100, "r2": 47}


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2 ** 63 - 1))
def test_conservation_and_priority_fuzz(seed):
    assert dtn_conservation_case(seed) == []


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2 ** 63 - 1))
def test_fallback_fuzz(seed):
    assert dtn_fallback_case(seed) == []
