"""Delay-tolerant file transfer: a priority queue served only while connected,
with cellular completion of whatever is left when a job's deadline passes."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from harborsim.connman import CELLULAR, MESH_INTERFACES

DEFAULT_DEADLINE = 1800.0
DIRECTIONS = ("upload", "download")

QUEUED = "queued"
ACTIVE = "active"
SUSPENDED = "suspended"
FALLBACK = "fallback"
COMPLETED = "completed"
FALLBACK_COMPLETED = "fallback_completed"
FAILED_DEADLINE = "failed_deadline"
TERMINAL = frozenset({COMPLETED, FALLBACK_COMPLETED, FAILED_DEADLINE})


class QueueError(ValueError):
    pass


@dataclass
class TransferJob:
    job_id: str
    size: int
    priority: int = 0
    created: float = 0.0
    deadline: float | None = None
    direction: str = "upload"
    realtime: bool = False
    node: str = ""
    bytes_done: int = 0
    ledger: dict[str, int] = field(default_factory=dict)
    state: str = QUEUED
    completed_at: float | None = None

    def __post_init__(self) -> None:
        if self.deadline is None:
            self.deadline = self.created + DEFAULT_DEADLINE

    @property
    def remaining(self) -> int:
        return self.size - self.bytes_done

    @property
    def done(self) -> bool:
        return self.state in TERMINAL

    @property
    def sort_key(self) -> tuple:
        return (-self.priority, self.created, self.job_id)

    def summary(self) -> dict:
        return {
            "job": self.job_id,
            "node": self.node,
            "direction": self.direction,
            "priority": self.priority,
            "realtime": self.realtime,
            "size": self.size,
            "created": self.created,
            "deadline": self.deadline,
            "state": self.state,
            "bytes_done": self.bytes_done,
            "completed": self.completed_at,
            "makespan": None if self.completed_at is None else self.completed_at - self.created,
            "ledger": dict(sorted(self.ledger.items())),
        }


@dataclass(frozen=True)
class TransferLogRecord:
    t: float
    job_id: str
    interface: str
    bytes: int
    rate: float
    gateway: str | None = None


class TransferQueue:
    """Per-node job queue ordered by (priority desc, created asc, job id asc).

    Budgets are carried as fractional byte credit so that, over any run of
    ticks, the bytes handed out equal floor(integral of rate dt / 8).
    """

    def __init__(self, owner: str = ""):
        self.owner = owner
        self.jobs: list[TransferJob] = []
        self._ids: set[str] = set()
        self._mesh_credit = 0.0
        self._cell_credit = 0.0

    def __iter__(self):
        return iter(self.jobs)

    def __len__(self) -> int:
        return len(self.jobs)

    def enqueue(self, job: TransferJob) -> "TransferQueue":
        if job.job_id in self._ids:
            raise QueueError(f"duplicate job id {job.job_id!r}")
        if job.size <= 0:
            raise QueueError(f"job {job.job_id}: size must be > 0")
        if job.deadline <= job.created:
            raise QueueError(f"job {job.job_id}: deadline must be after created")
        job.state = QUEUED
        self._ids.add(job.job_id)
        self.jobs.append(job)
        self.jobs.sort(key=lambda j: j.sort_key)
        return self

    @property
    def head(self) -> TransferJob | None:
        for j in self.jobs:
            if j.state in (QUEUED, ACTIVE, SUSPENDED):
                return j
        return None

    def pending(self) -> bool:
        return any(not j.done for j in self.jobs)

    def _give(self, job: TransferJob, nbytes: int, interface: str, now: float, dt: float) -> None:
        job.bytes_done += nbytes
        job.ledger[interface] = job.ledger.get(interface, 0) + nbytes
        if job.bytes_done == job.size:
            job.state = FALLBACK_COMPLETED if job.state == FALLBACK else COMPLETED
            job.completed_at = now + dt

    def tick_transfer(self, connected: bool, available_rate: float, dt: float, now: float,
                      interface: str = "dsrc", gateway: str | None = None,
                      realtime_only: bool = False) -> list[TransferLogRecord]:
        """Serve the queue head for one tick; later jobs inherit leftover budget.

        With ``realtime_only`` only jobs flagged real-time are eligible (used
        for cellular service while no mesh path exists).
        """
        if available_rate < 0:
            raise ValueError("available_rate must be >= 0")
        live = [j for j in self.jobs if j.state in (QUEUED, ACTIVE, SUSPENDED)]
        eligible = [j for j in live if j.realtime or not realtime_only]
        if realtime_only:
            for j in live:
                if not j.realtime:
                    j.state = SUSPENDED
        if not connected:
            for j in eligible:
                j.state = SUSPENDED
            return []
        self._mesh_credit += available_rate * dt / 8.0
        budget = math.floor(self._mesh_credit)
        records = []
        for j in eligible:
            j.state = QUEUED
        for j in eligible:
            if budget <= 0:
                j.state = ACTIVE
                break
            give = min(budget, j.remaining)
            j.state = ACTIVE
            self._give(j, give, interface, now, dt)
            budget -= give
            self._mesh_credit -= give
            records.append(TransferLogRecord(now, j.job_id, interface, give, available_rate,
                                             gateway if interface in MESH_INTERFACES else None))
            if j.state == ACTIVE:
                break
        if not any(j.state == ACTIVE for j in eligible):
            # Nothing left to serve: leftover credit does not bank for future jobs.
            self._mesh_credit = 0.0
        return records

    def deadline_fallback(self, now: float, cellular_rate: float, dt: float,
                          cellular_enabled: bool = True) -> list[TransferLogRecord]:
        """Move every overdue incomplete job to cellular and serve the fallback set."""
        for j in self.jobs:
            if j.state in (QUEUED, ACTIVE, SUSPENDED) and j.deadline <= now:
                j.state = FALLBACK if cellular_enabled else FAILED_DEADLINE
                if not cellular_enabled:
                    j.completed_at = None
        due = [j for j in self.jobs if j.state == FALLBACK]
        if not due:
            self._cell_credit = 0.0
            return []
        self._cell_credit += cellular_rate * dt / 8.0
        budget = math.floor(self._cell_credit)
        records = []
        for j in due:
            if budget <= 0:
                break
            give = min(budget, j.remaining)
            self._give(j, give, CELLULAR, now, dt)
            budget -= give
            self._cell_credit -= give
            records.append(TransferLogRecord(now, j.job_id, CELLULAR, give, cellular_rate, None))
        if not any(j.state == FALLBACK for j in self.jobs):
            self._cell_credit = 0.0
        return records


def enqueue(queue: TransferQueue, job: TransferJob) -> TransferQueue:
    return queue.enqueue(job)


def tick_transfer(queue: TransferQueue, connected: bool, available_rate: float, dt: float, now: float,
                  interface: str = "dsrc", gateway: str | None = None):
    return queue, queue.tick_transfer(connected, available_rate, dt, now, interface, gateway)


def deadline_fallback(queue: TransferQueue, now: float, cellular_rate: float, dt: float = 0.1,
                      cellular_enabled: bool = True):
    return queue, queue.deadline_fallback(now, cellular_rate, dt, cellular_enabled)


@dataclass
class Accounting:
    by_interface: dict[str, int]
    by_rsu: dict[str, int]

    @property
    def total(self) -> int:
        return sum(self.by_interface.values())


def interface_accounting(records: Iterable[TransferLogRecord | Mapping]) -> Accounting:
    """Total bytes per interface and per gateway RSU.

    Accepts either TransferLogRecord objects or decoded trace dicts.
    """
    by_if: dict[str, int] = {k: 0 for k in ("dsrc", "wifi", CELLULAR)}
    by_rsu: dict[str, int] = defaultdict(int)
    for r in records:
        if isinstance(r, Mapping):
            iface, nbytes, gw = r["interface"], r["bytes"], r.get("gateway")
        else:
            iface, nbytes, gw = r.interface, r.bytes, r.gateway
        by_if[iface] = by_if.get(iface, 0) + nbytes
        if gw is not None and iface in MESH_INTERFACES:
            by_rsu[gw] += nbytes
    return Accounting(by_if, dict(sorted(by_rsu.items())))
