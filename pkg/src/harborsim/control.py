"""Simulated testbed control plane.

Covers the server-side address registry, the on-node watchdog that
reboots frozen or orphaned nodes, and the dual-boot image deployment
state machine whose base partition is never touched.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, replace

NONE = "none"
REBOOT = "reboot"

IDLE = "idle"
UPLOADING = "uploading"
UNPACKING = "unpacking"
CONFIGURING = "configuring"
REBOOTING = "rebooting"
ACTIVE2 = "active2"
ROLLED_BACK = "rolled_back"
PHASES = (IDLE, UPLOADING, UNPACKING, CONFIGURING, REBOOTING, ACTIVE2, ROLLED_BACK)

START = "start"
UPLOAD_DONE = "upload_done"
UNPACK_DONE = "unpack_done"
CONFIG_DONE = "config_done"
REBOOT_DONE = "reboot_done"
FAILURE = "failure"
EVENTS = (START, UPLOAD_DONE, UNPACK_DONE, CONFIG_DONE, REBOOT_DONE, FAILURE)

# Event that completes each timed phase.
PHASE_EVENTS = {UPLOADING: UPLOAD_DONE, UNPACKING: UNPACK_DONE, CONFIGURING: CONFIG_DONE,
                REBOOTING: REBOOT_DONE}
DEFAULT_PHASE_DURATIONS = {UPLOADING: 480.0, UNPACKING: 240.0, CONFIGURING: 60.0, REBOOTING: 120.0}

_ADVANCE = {
    (IDLE, START): UPLOADING,
    (ROLLED_BACK, START): UPLOADING,
    (UPLOADING, UPLOAD_DONE): UNPACKING,
    (UNPACKING, UNPACK_DONE): CONFIGURING,
    (CONFIGURING, CONFIG_DONE): REBOOTING,
    (REBOOTING, REBOOT_DONE): ACTIVE2,
}


class DeploymentProtocolError(ValueError):
    def __init__(self, phase: str, event: str):
        super().__init__(f"event {event!r} not admissible in phase {phase!r}")
        self.phase = phase
        self.event = event


class NodeRegistry:
    """Latest known address per node; safe to call from several threads."""

    def __init__(self):
        self._entries: dict[str, tuple[str, float]] = {}
        self._lock = threading.Lock()

    def register(self, node_id: str, address: str, now: float) -> "NodeRegistry":
        with self._lock:
            self._entries[node_id] = (address, now)
        return self

    def lookup(self, node_id: str) -> str | None:
        with self._lock:
            entry = self._entries.get(node_id)
        return None if entry is None else entry[0]

    def last_update(self, node_id: str) -> float | None:
        with self._lock:
            entry = self._entries.get(node_id)
        return None if entry is None else entry[1]

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> dict[str, tuple[str, float]]:
        with self._lock:
            return dict(self._entries)


def register_node(registry: NodeRegistry, node_id: str, address: str, now: float) -> NodeRegistry:
    return registry.register(node_id, address, now)


def watchdog_step(last_reply: float, frozen: bool, now: float, loss_threshold: float) -> str:
    if loss_threshold <= 0:
        raise ValueError("loss_threshold must be > 0")
    if frozen or now - last_reply > loss_threshold:
        return REBOOT
    return NONE


@dataclass
class Watchdog:
    last_reply: float = 0.0
    frozen: bool = False
    loss_threshold: float = 120.0
    reboot_duration: float = 60.0
    reboots: int = 0

    def reply(self, now: float) -> None:
        self.last_reply = max(self.last_reply, now)

    def step(self, now: float) -> str:
        action = watchdog_step(self.last_reply, self.frozen, now, self.loss_threshold)
        if action == REBOOT:
            self.frozen = False
            self.last_reply = now + self.reboot_duration
            self.reboots += 1
        return action


@dataclass(frozen=True)
class DeploymentState:
    node: str
    phase: str = IDLE
    phase_started: float = 0.0
    active_partition: int = 1


def deploy_step(state: DeploymentState, event: str, now: float) -> DeploymentState:
    if event == FAILURE:
        if state.phase == IDLE:
            raise DeploymentProtocolError(state.phase, event)
        return replace(state, phase=ROLLED_BACK, phase_started=now, active_partition=1)
    nxt = _ADVANCE.get((state.phase, event))
    if nxt is None:
        raise DeploymentProtocolError(state.phase, event)
    return replace(state, phase=nxt, phase_started=now, active_partition=2 if nxt == ACTIVE2 else 1)


def bootable(state: DeploymentState) -> bool:
    """The active partition holds a complete system: the base, or a finished image."""
    return state.active_partition == 1 or state.phase == ACTIVE2


class Deployment:
    """Drives a DeploymentState through its timed phases."""

    def __init__(self, node: str, durations: dict[str, float] | None = None):
        self.state = DeploymentState(node)
        self.fail_at: str | None = None  # inject a failure halfway through this phase
        self.durations = dict(DEFAULT_PHASE_DURATIONS if durations is None else durations)

    @property
    def busy(self) -> bool:
        return self.state.phase in PHASE_EVENTS

    def start(self, now: float) -> DeploymentState:
        self.state = deploy_step(self.state, START, now)
        return self.state

    def fail(self, now: float) -> DeploymentState:
        self.state = deploy_step(self.state, FAILURE, now)
        return self.state

    def due(self, now: float) -> str | None:
        """Completion event owed at `now`, if the current phase has run its course."""
        phase = self.state.phase
        if phase in PHASE_EVENTS and now >= self.state.phase_started + self.durations[phase]:
            return PHASE_EVENTS[phase]
        return None

    def advance(self, now: float) -> list[DeploymentState]:
        """Fire every completion that is due; returns the states entered."""
        entered = []
        while (event := self.due(now)) is not None:
            end = self.state.phase_started + self.durations[self.state.phase]
            self.state = deploy_step(self.state, event, end)
            entered.append(self.state)
        return entered


def happy_path(node: str, t0: float, durations: dict[str, float] | None = None) -> list[DeploymentState]:
    d = Deployment(node, durations)
    states = [d.start(t0)]
    states += d.advance(float("inf"))
    return states
