"""Scenario configuration and the mobility substrate.

A scenario is a JSON document describing the port map, roadside units,
truck circuits and the parameters handed to every other subsystem. The
`World` owns node positions and the simulation clock and advances all
vehicles one tick at a time along their polyline routes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from harborsim.connman import NormalizationBounds, WeightVector
from harborsim.control import DEFAULT_PHASE_DURATIONS, PHASE_EVENTS
from harborsim.dtn import DEFAULT_DEADLINE, DIRECTIONS
from harborsim.probe import ProbeConfig
from harborsim.radio import RadioParams
from harborsim.routing import STRATEGIES

LOOP = "loop"
STOP = "stop"
ROUTE_POLICIES = (LOOP, STOP)

VEHICLE = "vehicle"
RSU = "rsu"

BUILTIN_SCENARIOS = ("default", "calibrated_rate")


class ScenarioError(ValueError):
    """A scenario document failed validation."""


class ScenarioParseError(ScenarioError):
    """A scenario document is not well-formed JSON."""


@dataclass(frozen=True)
class MapBounds:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def contains(self, p: tuple[float, float]) -> bool:
        return self.x_min <= p[0] <= self.x_max and self.y_min <= p[1] <= self.y_max

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min


@dataclass(frozen=True)
class RsuSpec:
    id: str
    position: tuple[float, float]


@dataclass(frozen=True)
class VehicleSpec:
    id: str
    route: tuple[tuple[float, float], ...]
    speed: float
    route_policy: str = LOOP


@dataclass(frozen=True)
class JobSpec:
    job_id: str
    node: str
    size: int
    priority: int = 0
    created: float = 0.0
    deadline: float | None = None
    direction: str = "upload"
    realtime: bool = False

    @property
    def effective_deadline(self) -> float:
        return self.created + DEFAULT_DEADLINE if self.deadline is None else self.deadline


@dataclass(frozen=True)
class CellularConfig:
    enabled: bool = True
    rate: float = 1e6


@dataclass(frozen=True)
class DeploymentSpec:
    node: str
    start: float
    fail_at: str | None = None


@dataclass(frozen=True)
class ControlConfig:
    heartbeat_period: float = 10.0
    loss_threshold: float = 120.0
    reboot_duration: float = 60.0
    freeze_rate: float = 0.0  # freezes per node per hour
    phase_durations: tuple[tuple[str, float], ...] = tuple(DEFAULT_PHASE_DURATIONS.items())
    deployments: tuple[DeploymentSpec, ...] = ()


@dataclass(frozen=True)
class Scenario:
    seed: int
    duration: float
    tick: int
    map_bounds: MapBounds
    rsus: tuple[RsuSpec, ...]
    vehicles: tuple[VehicleSpec, ...]
    radio_params: RadioParams = field(default_factory=RadioParams)
    connman_weights: WeightVector = field(default_factory=WeightVector)
    dtn_jobs: tuple[JobSpec, ...] = ()
    probe_config: ProbeConfig = field(default_factory=ProbeConfig)
    # Optional knobs beyond the core fields; all have defaults.
    routing_strategy: str = "min_hop"
    beacon_period: float = 1.0
    trace_interval: float = 1.0
    cross_traffic: float = 0.0
    cellular: CellularConfig = field(default_factory=CellularConfig)
    wifi_params: RadioParams | None = None
    connman_bounds: NormalizationBounds | None = None
    control: ControlConfig = field(default_factory=ControlConfig)
    metadata: dict[str, Any] = field(default_factory=dict, compare=False)

    @property
    def node_ids(self) -> list[str]:
        return [v.id for v in self.vehicles] + [r.id for r in self.rsus]

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration * 1000.0 / self.tick))

    @property
    def dt(self) -> float:
        return self.tick / 1000.0


# --- parsing -------------------------------------------------------------------------

_TOP_FIELDS = {
    "seed", "duration", "tick", "map_bounds", "rsus", "vehicles", "radio_params",
    "connman_weights", "dtn_jobs", "probe_config", "routing_strategy", "beacon_period",
    "trace_interval", "cross_traffic", "cellular", "wifi_params", "connman_bounds",
    "control", "metadata",
}
_REQUIRED = ("duration", "map_bounds", "rsus", "vehicles")


def _fail(path: str, value: Any, why: str) -> ScenarioError:
    return ScenarioError(f"{path} = {value!r}: {why}")


def _obj(value: Any, path: str, allowed: set[str], required: tuple[str, ...] = ()) -> dict:
    if not isinstance(value, dict):
        raise _fail(path, value, "expected an object")
    unknown = sorted(set(value) - allowed)
    if unknown:
        raise ScenarioError(f"{path}: unknown field(s) {', '.join(unknown)}")
    for key in required:
        if key not in value:
            raise ScenarioError(f"{path}.{key}: required field missing")
    return value


def _num(value: Any, path: str, *, positive: bool = False, nonneg: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise _fail(path, value, "expected a finite number")
    if positive and value <= 0:
        raise _fail(path, value, "must be > 0")
    if nonneg and value < 0:
        raise _fail(path, value, "must be >= 0")
    return float(value)


def _int(value: Any, path: str, *, positive: bool = False, nonneg: bool = False) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise _fail(path, value, "expected an integer")
    if positive and value <= 0:
        raise _fail(path, value, "must be > 0")
    if nonneg and value < 0:
        raise _fail(path, value, "must be >= 0")
    return value


def _point(value: Any, path: str, bounds: MapBounds) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise _fail(path, value, "expected [x, y]")
    p = (_num(value[0], f"{path}[0]"), _num(value[1], f"{path}[1]"))
    if not bounds.contains(p):
        raise _fail(path, list(value), "position outside map_bounds")
    return p


def _str(value: Any, path: str) -> str:
    if not isinstance(value, str) or not value:
        raise _fail(path, value, "expected a non-empty string")
    return value


def _dataclass_from(cls, value: Any, path: str):
    if not isinstance(value, dict):
        raise _fail(path, value, "expected an object")
    try:
        return cls.from_dict(value)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{path}: {exc}") from None


def scenario_from_dict(doc: Any) -> Scenario:
    """Validate a decoded scenario document."""
    doc = _obj(doc, "scenario", _TOP_FIELDS, _REQUIRED)

    mb = _obj(doc["map_bounds"], "map_bounds", {"x_min", "y_min", "x_max", "y_max"},
              ("x_min", "y_min", "x_max", "y_max"))
    bounds = MapBounds(*(_num(mb[k], f"map_bounds.{k}") for k in ("x_min", "y_min", "x_max", "y_max")))
    if bounds.width <= 0 or bounds.height <= 0:
        raise _fail("map_bounds", mb, "empty rectangle")

    seed = _int(doc.get("seed", 0), "seed", nonneg=True)
    duration = _num(doc["duration"], "duration", positive=True)
    tick = _int(doc.get("tick", 100), "tick", positive=True)
    if duration * 1000.0 < tick:
        raise _fail("duration", duration, "shorter than one tick")

    ids: set[str] = set()

    def claim(node_id: str, path: str) -> None:
        if node_id in ids:
            raise _fail(path, node_id, "duplicate node id")
        ids.add(node_id)

    if not isinstance(doc["rsus"], list):
        raise _fail("rsus", doc["rsus"], "expected a list")
    rsus = []
    for i, r in enumerate(doc["rsus"]):
        path = f"rsus[{i}]"
        r = _obj(r, path, {"id", "position"}, ("id", "position"))
        rid = _str(r["id"], f"{path}.id")
        path = f"rsus[{i}] ({rid})"
        claim(rid, f"{path}.id")
        rsus.append(RsuSpec(rid, _point(r["position"], f"{path}.position", bounds)))

    if not isinstance(doc["vehicles"], list):
        raise _fail("vehicles", doc["vehicles"], "expected a list")
    vehicles = []
    for i, v in enumerate(doc["vehicles"]):
        path = f"vehicles[{i}]"
        v = _obj(v, path, {"id", "route", "speed", "route_policy"}, ("id", "route", "speed"))
        vid = _str(v["id"], f"{path}.id")
        path = f"vehicles[{i}] ({vid})"
        claim(vid, f"{path}.id")
        route = v["route"]
        if not isinstance(route, list) or not route:
            raise _fail(f"{path}.route", route, "route needs at least one vertex")
        pts = tuple(_point(p, f"{path}.route[{k}]", bounds) for k, p in enumerate(route))
        speed = _num(v["speed"], f"{path}.speed", nonneg=True)
        policy = v.get("route_policy", LOOP)
        if policy not in ROUTE_POLICIES:
            raise _fail(f"{path}.route_policy", policy, f"must be one of {ROUTE_POLICIES}")
        vehicles.append(VehicleSpec(vid, pts, speed, policy))

    kw: dict[str, Any] = {}
    if "radio_params" in doc:
        kw["radio_params"] = _dataclass_from(RadioParams, doc["radio_params"], "radio_params")
    if doc.get("wifi_params") is not None:
        kw["wifi_params"] = _dataclass_from(RadioParams, doc["wifi_params"], "wifi_params")
    if "connman_weights" in doc:
        kw["connman_weights"] = _dataclass_from(WeightVector, doc["connman_weights"], "connman_weights")
    if doc.get("connman_bounds") is not None:
        kw["connman_bounds"] = _dataclass_from(NormalizationBounds, doc["connman_bounds"], "connman_bounds")
    if "probe_config" in doc:
        kw["probe_config"] = _dataclass_from(ProbeConfig, doc["probe_config"], "probe_config")

    if "routing_strategy" in doc:
        if doc["routing_strategy"] not in STRATEGIES:
            raise _fail("routing_strategy", doc["routing_strategy"], f"must be one of {STRATEGIES}")
        kw["routing_strategy"] = doc["routing_strategy"]
    if "beacon_period" in doc:
        kw["beacon_period"] = _num(doc["beacon_period"], "beacon_period", positive=True)
    if "trace_interval" in doc:
        kw["trace_interval"] = _num(doc["trace_interval"], "trace_interval", positive=True)
    if "cross_traffic" in doc:
        x = _num(doc["cross_traffic"], "cross_traffic", nonneg=True)
        if x >= 1:
            raise _fail("cross_traffic", x, "must be < 1")
        kw["cross_traffic"] = x
    if "cellular" in doc:
        c = _obj(doc["cellular"], "cellular", {"enabled", "rate"})
        enabled = c.get("enabled", True)
        if not isinstance(enabled, bool):
            raise _fail("cellular.enabled", enabled, "expected true/false")
        kw["cellular"] = CellularConfig(enabled, _num(c.get("rate", 1e6), "cellular.rate", positive=True))
    if "control" in doc:
        kw["control"] = _control(doc["control"], ids)
    if "metadata" in doc:
        if not isinstance(doc["metadata"], dict):
            raise _fail("metadata", doc["metadata"], "expected an object")
        kw["metadata"] = doc["metadata"]

    vehicle_ids = {v.id for v in vehicles}
    if not isinstance(doc.get("dtn_jobs", []), list):
        raise _fail("dtn_jobs", doc["dtn_jobs"], "expected a list")
    jobs = []
    job_ids: set[str] = set()
    for i, j in enumerate(doc.get("dtn_jobs", [])):
        path = f"dtn_jobs[{i}]"
        j = _obj(j, path, {"job_id", "node", "size", "priority", "created", "deadline", "direction", "realtime"},
                 ("job_id", "node", "size"))
        jid = _str(j["job_id"], f"{path}.job_id")
        if jid in job_ids:
            raise _fail(f"{path}.job_id", jid, "duplicate job id")
        job_ids.add(jid)
        node = _str(j["node"], f"{path}.node")
        if node not in vehicle_ids:
            raise _fail(f"{path}.node", node, "not a vehicle id")
        created = _num(j.get("created", 0.0), f"{path}.created", nonneg=True)
        deadline = j.get("deadline")
        if deadline is not None:
            deadline = _num(deadline, f"{path}.deadline")
            if deadline <= created:
                raise _fail(f"{path}.deadline", deadline, "must be after created")
        direction = j.get("direction", "upload")
        if direction not in DIRECTIONS:
            raise _fail(f"{path}.direction", direction, f"must be one of {DIRECTIONS}")
        realtime = j.get("realtime", False)
        if not isinstance(realtime, bool):
            raise _fail(f"{path}.realtime", realtime, "expected true/false")
        jobs.append(JobSpec(jid, node, _int(j["size"], f"{path}.size", positive=True),
                            _int(j.get("priority", 0), f"{path}.priority"), created, deadline,
                            direction, realtime))

    return Scenario(seed=seed, duration=duration, tick=tick, map_bounds=bounds, rsus=tuple(rsus),
                    vehicles=tuple(vehicles), dtn_jobs=tuple(jobs), **kw)


def _control(value: Any, ids: set[str]) -> ControlConfig:
    c = _obj(value, "control", {"heartbeat_period", "loss_threshold", "reboot_duration", "freeze_rate",
                                "phase_durations", "deployments"})
    kw: dict[str, Any] = {}
    for key in ("heartbeat_period", "loss_threshold", "reboot_duration"):
        if key in c:
            kw[key] = _num(c[key], f"control.{key}", positive=True)
    if "freeze_rate" in c:
        kw["freeze_rate"] = _num(c["freeze_rate"], "control.freeze_rate", nonneg=True)
    if "phase_durations" in c:
        pd = _obj(c["phase_durations"], "control.phase_durations", set(DEFAULT_PHASE_DURATIONS))
        merged = dict(DEFAULT_PHASE_DURATIONS)
        for k, v in pd.items():
            merged[k] = _num(v, f"control.phase_durations.{k}", positive=True)
        kw["phase_durations"] = tuple(merged.items())
    if "deployments" in c:
        if not isinstance(c["deployments"], list):
            raise _fail("control.deployments", c["deployments"], "expected a list")
        deps = []
        for i, d in enumerate(c["deployments"]):
            path = f"control.deployments[{i}]"
            d = _obj(d, path, {"node", "start", "fail_at"}, ("node", "start"))
            node = _str(d["node"], f"{path}.node")
            if node not in ids:
                raise _fail(f"{path}.node", node, "unknown node id")
            fail_at = d.get("fail_at")
            if fail_at is not None and fail_at not in PHASE_EVENTS:
                raise _fail(f"{path}.fail_at", fail_at, f"must be one of {sorted(PHASE_EVENTS)}")
            deps.append(DeploymentSpec(node, _num(d["start"], f"{path}.start", nonneg=True), fail_at))
        kw["deployments"] = tuple(deps)
    return ControlConfig(**kw)


def load_scenario(config_text: str) -> Scenario:
    """Parse and validate a JSON scenario document."""
    try:
        doc = json.loads(config_text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"malformed scenario JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(doc)


def load_scenario_file(path: str | Path) -> Scenario:
    return load_scenario(Path(path).read_text())


def builtin_scenario_text(name: str) -> str:
    if name not in BUILTIN_SCENARIOS:
        raise KeyError(name)
    return resources.files("harborsim.scenarios").joinpath(f"{name}.json").read_text()


def default_scenario() -> Scenario:
    return load_scenario(builtin_scenario_text("default"))


def scenario_to_dict(sc: Scenario) -> dict[str, Any]:
    """Inverse of scenario_from_dict for round-tripping and --seed overrides."""
    doc: dict[str, Any] = {
        "seed": sc.seed,
        "duration": sc.duration,
        "tick": sc.tick,
        "map_bounds": {"x_min": sc.map_bounds.x_min, "y_min": sc.map_bounds.y_min,
                       "x_max": sc.map_bounds.x_max, "y_max": sc.map_bounds.y_max},
        "rsus": [{"id": r.id, "position": list(r.position)} for r in sc.rsus],
        "vehicles": [{"id": v.id, "route": [list(p) for p in v.route], "speed": v.speed,
                      "route_policy": v.route_policy} for v in sc.vehicles],
        "radio_params": sc.radio_params.to_dict(),
        "connman_weights": sc.connman_weights.to_dict(),
        "dtn_jobs": [{"job_id": j.job_id, "node": j.node, "size": j.size, "priority": j.priority,
                      "created": j.created, "deadline": j.deadline, "direction": j.direction,
                      "realtime": j.realtime} for j in sc.dtn_jobs],
        "probe_config": sc.probe_config.to_dict(),
        "routing_strategy": sc.routing_strategy,
        "beacon_period": sc.beacon_period,
        "trace_interval": sc.trace_interval,
        "cross_traffic": sc.cross_traffic,
        "cellular": {"enabled": sc.cellular.enabled, "rate": sc.cellular.rate},
        "control": {
            "heartbeat_period": sc.control.heartbeat_period,
            "loss_threshold": sc.control.loss_threshold,
            "reboot_duration": sc.control.reboot_duration,
            "freeze_rate": sc.control.freeze_rate,
            "phase_durations": dict(sc.control.phase_durations),
            "deployments": [{"node": d.node, "start": d.start, "fail_at": d.fail_at}
                            for d in sc.control.deployments],
        },
    }
    if sc.wifi_params is not None:
        doc["wifi_params"] = sc.wifi_params.to_dict()
    if sc.connman_bounds is not None:
        doc["connman_bounds"] = sc.connman_bounds.to_dict()
    if sc.metadata:
        doc["metadata"] = sc.metadata
    return doc


# --- mobility --------------------------------------------------------------------------

@dataclass
class NodeState:
    id: str
    kind: str
    position: tuple[float, float]
    speed: float
    heading: float | None
    boot_partition: int = 1
    frozen: bool = False


class World:
    """Positions, kinematics and the clock for every node in a scenario.

    Node index order is vehicles (scenario order) followed by RSUs.
    Vehicle motion is vectorised over one concatenated vertex array so a
    tick costs a handful of numpy calls regardless of fleet size.
    """

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.ids = scenario.node_ids
        self.n_vehicles = len(scenario.vehicles)
        self.kinds = [VEHICLE] * self.n_vehicles + [RSU] * len(scenario.rsus)
        self.index = {nid: i for i, nid in enumerate(self.ids)}
        self.now_ms = 0

        verts, cum, offsets, first, last, lengths = [], [], [], [], [], []
        base = 0.0
        for v in scenario.vehicles:
            pts = np.asarray(v.route, dtype=float)
            seg = np.hypot(*np.diff(pts, axis=0).T) if len(pts) > 1 else np.zeros(0)
            local = np.concatenate([[0.0], np.cumsum(seg)])
            first.append(len(verts))
            verts.extend(pts.tolist())
            cum.extend((base + local).tolist())
            last.append(len(verts) - 1)
            offsets.append(base)
            lengths.append(local[-1])
            base += local[-1] + 1.0  # gap keeps routes apart in the shared array
        self._verts = np.asarray(verts, dtype=float).reshape(-1, 2)
        self._cum = np.asarray(cum, dtype=float)
        self._offset = np.asarray(offsets, dtype=float)
        self._first = np.asarray(first, dtype=int)
        self._last = np.asarray(last, dtype=int)
        self.route_length = np.asarray(lengths, dtype=float)
        self._nominal_speed = np.asarray([v.speed for v in scenario.vehicles], dtype=float)
        self._loop = np.asarray([v.route_policy == LOOP for v in scenario.vehicles], dtype=bool)
        self.progress = np.zeros(self.n_vehicles)

        self.positions = np.zeros((len(self.ids), 2))
        for k, r in enumerate(scenario.rsus):
            self.positions[self.n_vehicles + k] = r.position
        self.speed = np.zeros(len(self.ids))
        self.heading = np.full(len(self.ids), np.nan)
        self.boot_partition = np.ones(len(self.ids), dtype=int)
        self.frozen = np.zeros(len(self.ids), dtype=bool)
        self._update_kinematics()

    @property
    def now(self) -> float:
        return self.now_ms / 1000.0

    def step(self, dt: float) -> None:
        """Advance every vehicle speed*dt along its route and the clock by dt."""
        if self.n_vehicles:
            s = self.progress + self._nominal_speed * dt
            L = self.route_length
            wrap = self._loop & (s > L) & (L > 0)
            s = np.where(wrap, np.mod(s, np.where(L > 0, L, 1.0)), s)
            self.progress = np.minimum(s, L)
            self._update_kinematics()
        self.now_ms += int(round(dt * 1000.0))

    def _update_kinematics(self) -> None:
        n = self.n_vehicles
        if not n:
            return
        g = self._offset + self.progress
        idx = np.searchsorted(self._cum, g, side="right") - 1
        idx = np.clip(idx, self._first, np.maximum(self._last - 1, self._first))
        single = self._first == self._last
        nxt = np.where(single, idx, idx + 1)
        a = self._verts[idx]
        b = self._verts[nxt]
        seg = self._cum[nxt] - self._cum[idx]
        frac = np.where(seg > 0, (g - self._cum[idx]) / np.where(seg > 0, seg, 1.0), 1.0)
        frac = np.clip(frac, 0.0, 1.0)
        self.positions[:n] = a + frac[:, None] * (b - a)
        parked = (~self._loop & (self.progress >= self.route_length)) | single | (self.route_length == 0)
        moving = (self._nominal_speed > 0) & ~parked & (seg > 0)
        self.speed[:n] = np.where(moving, self._nominal_speed, 0.0)
        d = b - a
        self.heading[:n] = np.where(moving, np.arctan2(d[:, 1], d[:, 0]), np.nan)

    def node_state(self, node_id: str) -> NodeState:
        i = self.index[node_id]
        h = self.heading[i]
        return NodeState(
            id=node_id,
            kind=self.kinds[i],
            position=(float(self.positions[i, 0]), float(self.positions[i, 1])),
            speed=float(self.speed[i]),
            heading=None if np.isnan(h) else float(h),
            boot_partition=int(self.boot_partition[i]),
            frozen=bool(self.frozen[i]),
        )


def step(world: World, dt: float) -> World:
    """Functional alias for World.step; mutates and returns the same world."""
    world.step(dt)
    return world
