"""Connection manager: interface scoring, default-interface selection and
connect/disconnect edge detection."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Any, Iterable, Sequence

DSRC = "dsrc"
WIFI = "wifi"
CELLULAR = "cellular"
INTERFACES = (DSRC, WIFI, CELLULAR)
MESH_INTERFACES = (DSRC, WIFI)
_TIE_ORDER = {DSRC: 0, WIFI: 1, CELLULAR: 2}

CONNECT = "connect"
DISCONNECT = "disconnect"


class NoInterfaceError(RuntimeError):
    """Neither a mesh path nor cellular is available."""


@dataclass(frozen=True)
class WeightVector:
    w_speed: float = 0.2
    w_heading: float = 0.2
    w_hops: float = 0.2
    w_distance: float = 0.2
    w_rssi: float = 0.2

    def __post_init__(self) -> None:
        values = self.as_tuple()
        if any(not math.isfinite(w) or w < 0 for w in values):
            raise ValueError(f"weights must be finite and non-negative, got {values}")
        if not any(w > 0 for w in values):
            raise ValueError("at least one weight must be positive")

    def as_tuple(self) -> tuple[float, ...]:
        return (self.w_speed, self.w_heading, self.w_hops, self.w_distance, self.w_rssi)

    def scaled(self, alpha: float) -> "WeightVector":
        return WeightVector(*(alpha * w for w in self.as_tuple()))

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "WeightVector":
        return cls(**data)

    def to_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class NormalizationBounds:
    v_max: float = 10.0
    d_max: float = 273.0
    sensitivity: float = -95.0
    rssi_ref: float = -30.0

    def __post_init__(self) -> None:
        if self.v_max <= 0 or self.d_max <= 0:
            raise ValueError("v_max and d_max must be > 0")
        if self.rssi_ref <= self.sensitivity:
            raise ValueError("rssi_ref must be above sensitivity")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "NormalizationBounds":
        return cls(**data)

    def to_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class Factors:
    speed: float
    heading_alignment: float
    hop_count: int
    next_hop_distance: float
    rssi: float


@dataclass(frozen=True)
class InterfaceChoice:
    node: str
    t: float
    choice: str
    score: float
    factors: Factors | None
    realtime: bool = False


def _clamp(x: float) -> float:
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


def heading_alignment(heading: float | None, bearing: float) -> float:
    """(1 + cos angle)/2 between travel heading and bearing to the next hop.

    A stationary vehicle has no heading and scores the neutral 0.5.
    """
    if heading is None:
        return 0.5
    return _clamp((1.0 + math.cos(heading - bearing)) / 2.0)


def utilities(f: Factors, b: NormalizationBounds) -> tuple[float, float, float, float, float]:
    return (
        _clamp(1.0 - f.speed / b.v_max),
        _clamp(f.heading_alignment),
        1.0 / f.hop_count,
        _clamp(1.0 - f.next_hop_distance / b.d_max),
        _clamp((f.rssi - b.sensitivity) / (b.rssi_ref - b.sensitivity)),
    )


def score_interface(factors: Factors, weights: WeightVector,
                    bounds: NormalizationBounds | None = None) -> float:
    if factors.hop_count < 1:
        raise ValueError(f"hop_count must be >= 1, got {factors.hop_count}")
    if any(w < 0 for w in weights.as_tuple()):
        raise ValueError("negative weight")
    u = utilities(factors, bounds or NormalizationBounds())
    return sum(w * x for w, x in zip(weights.as_tuple(), u))


def select_interface(node: str, candidates: Sequence[tuple[str, Factors]], weights: WeightVector,
                     job_realtime: bool = False, *, bounds: NormalizationBounds | None = None,
                     cellular_enabled: bool = True, t: float = 0.0) -> InterfaceChoice:
    """Pick the default interface among mesh candidates, falling back to cellular.

    `candidates` lists only mesh interfaces that currently have a gateway
    path. Ties go dsrc, then wifi.
    """
    best: tuple[float, int, str, Factors] | None = None
    for iface, f in candidates:
        if iface not in MESH_INTERFACES:
            raise ValueError(f"{iface!r} is not a mesh interface")
        s = score_interface(f, weights, bounds)
        key = (-s, _TIE_ORDER[iface])
        if best is None or key < (-best[0], best[1]):
            best = (s, _TIE_ORDER[iface], iface, f)
    if best is not None:
        return InterfaceChoice(node, t, best[2], best[0], best[3], job_realtime)
    if cellular_enabled:
        return InterfaceChoice(node, t, CELLULAR, 0.0, None, job_realtime)
    raise NoInterfaceError(f"node {node} has no gateway path and cellular is disabled")


@dataclass(frozen=True)
class ConnectivityEvent:
    t: float
    node: str
    kind: str


def connectivity_events(sequence: Iterable[tuple[float, bool]], node: str = "") -> list[ConnectivityEvent]:
    """Edge-detect a time-ordered reachability series.

    A series that starts unreachable opens a disconnection at its first
    timestamp. Open intervals are closed by the consumer at run end.
    """
    events: list[ConnectivityEvent] = []
    prev: bool | None = None
    last_t = -math.inf
    for t, up in sequence:
        if t < last_t:
            raise ValueError(f"reachability sequence not time-ordered at t={t}")
        last_t = t
        up = bool(up)
        if prev is None:
            if not up:
                events.append(ConnectivityEvent(t, node, DISCONNECT))
        elif up != prev:
            events.append(ConnectivityEvent(t, node, CONNECT if up else DISCONNECT))
        prev = up
    return events
