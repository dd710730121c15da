"""The tick-driven event loop that ties every subsystem together.

Per tick, in order: control-plane housekeeping, mobility, radio links,
beacons and topology, gateway paths, connectivity edges, interface
choice, DTN service, probing, heartbeats, then periodic samples. Every
stochastic draw comes from a stream spawned off the scenario seed, so a
scenario fully determines its trace.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from harborsim import __version__
from harborsim.connman import (CELLULAR, CONNECT, DISCONNECT, DSRC, WIFI, Factors, NoInterfaceError,
                               NormalizationBounds, heading_alignment, select_interface)
from harborsim.control import (ACTIVE2, REBOOT, REBOOTING, Deployment, NodeRegistry, Watchdog)
from harborsim.dtn import TERMINAL, TransferJob, TransferQueue
from harborsim.probe import probe_round
from harborsim.radio import link_up_matrix, pdr, radio_range, rssi_matrix
from harborsim.routing import (GREEDY_GEO, BeaconMatrix, Path, Topology, gateway_distances,
                               greedy_geo_path, min_hop_path)
from harborsim.trace import TraceWriter
from harborsim.world import Scenario, World

log = logging.getLogger(__name__)

NO_CHOICE = "none"


def _r(x: float, nd: int = 3) -> float:
    return round(float(x), nd)


@dataclass
class RunResult:
    counts: dict[str, int]
    digest: str
    queues: dict[str, TransferQueue]
    registry: NodeRegistry
    deployments: dict[str, Deployment]
    reboots: dict[str, int] = field(default_factory=dict)


class Simulation:
    def __init__(self, scenario: Scenario, writer: TraceWriter | None = None):
        self.sc = sc = scenario
        self.writer = writer or TraceWriter()
        self.world = w = World(sc)
        self.n = n = len(w.ids)
        self.nv = nv = w.n_vehicles
        self.rsu_idx = list(range(nv, n))
        self.rsu_ids = frozenset(w.ids[nv:])

        sens_rng, self.shadow_rng, self.probe_rng, self.control_rng = (
            np.random.default_rng(s) for s in np.random.SeedSequence(sc.seed).spawn(4))
        radio = sc.radio_params
        self.radio = radio
        self.tx = np.array([radio.transmit_power(k) for k in w.kinds], dtype=float)
        self.sens = radio.sensitivity + sens_rng.uniform(-radio.sensitivity_spread,
                                                         radio.sensitivity_spread, n)
        self.link = np.zeros((n, n), dtype=bool)
        self.rssi = np.full((n, n), -np.inf)
        self.beacons = BeaconMatrix(n, sc.beacon_period)
        self.throughput = radio.throughput
        self.bounds = sc.connman_bounds or NormalizationBounds(d_max=radio_range(radio),
                                                              sensitivity=radio.sensitivity)
        self.wifi = sc.wifi_params
        self.wifi_link = np.zeros((nv, n - nv), dtype=bool)
        self.wifi_rssi = np.full((nv, n - nv), -np.inf)

        self.queues = {v.id: TransferQueue(v.id) for v in sc.vehicles}
        self._jobs = sorted(sc.dtn_jobs, key=lambda j: (j.created, j.job_id))
        self._next_job = 0
        self._reported: set[str] = set()
        self._busy: set[int] = set()  # vehicles whose queue may hold unfinished jobs
        self.probe_debt = np.zeros(nv)  # bits still owed to probe traffic

        c = sc.control
        self.watchdogs = {v.id: Watchdog(0.0, False, c.loss_threshold, c.reboot_duration)
                          for v in sc.vehicles}
        self.offline_until = np.full(n, -np.inf)
        self.registry = NodeRegistry()
        self._addr_seq = [0] * nv
        self.deployments: dict[str, Deployment] = {}
        self._deploy_specs = sorted(c.deployments, key=lambda d: (d.start, d.node))
        self._next_deploy = 0

        self.reachable = np.zeros(nv, dtype=bool)
        self.choice = [NO_CHOICE] * nv
        self._adj_key: bytes | None = None
        self._choice_key: tuple | None = None
        self._paths: list[Path | None] = [None] * nv

        self._ms = {
            "beacon": int(round(sc.beacon_period * 1000)),
            "trace": int(round(sc.trace_interval * 1000)),
            "probe": int(round(sc.probe_config.period * 1000)),
            "heartbeat": int(round(c.heartbeat_period * 1000)),
        }

    # --- helpers -------------------------------------------------------------------

    def _due(self, now_ms: int, key: str) -> bool:
        period = self._ms[key]
        # Fires on the first tick at or after each multiple of the period.
        return now_ms % period < self.sc.tick

    def _online(self, now: float) -> np.ndarray:
        return ~self.world.frozen & (self.offline_until <= now)

    def _new_address(self, i: int, iface: str) -> str:
        self._addr_seq[i] += 1
        return f"{iface}/{self.world.ids[i]}#{self._addr_seq[i]}"

    def _path_rate(self, path: Path) -> float:
        ix = self.world.index
        worst = 1.0
        for a, b in zip(path.hops, path.hops[1:]):
            i, j = ix[a], ix[b]
            worst = min(worst, pdr(self.rssi[i, j], self.radio, self.sens[j]),
                        pdr(self.rssi[j, i], self.radio, self.sens[i]))
        return self.throughput * worst * (1.0 - self.sc.cross_traffic) / path.hop_count

    def _wifi_candidate(self, v: int) -> int | None:
        if self.wifi is None or not self.wifi_link[v].any():
            return None
        r = np.where(self.wifi_link[v], self.wifi_rssi[v], -np.inf)
        return int(np.argmax(r))

    def _factors(self, v: int, target: int, hops: int, rssi_db: float) -> Factors:
        w = self.world
        d = w.positions[target] - w.positions[v]
        h = w.heading[v]
        align = heading_alignment(None if np.isnan(h) else float(h), math.atan2(d[1], d[0]))
        return Factors(float(w.speed[v]), align, hops, float(math.hypot(d[0], d[1])), float(rssi_db))

    # --- per-tick stages ---------------------------------------------------------------

    def _links(self, online: np.ndarray, now_ms: int, now: float) -> np.ndarray:
        w = self.world
        diff = w.positions[:, None, :] - w.positions[None, :, :]
        dist = np.maximum(np.hypot(diff[..., 0], diff[..., 1]), 1.0)
        rssi = rssi_matrix(self.radio, self.tx, dist)
        if self.radio.shadowing_sigma > 0:
            z = self.shadow_rng.standard_normal((self.n, self.n)) * self.radio.shadowing_sigma
            z = np.triu(z, 1)
            rssi = rssi + z + z.T
        np.fill_diagonal(rssi, -np.inf)
        self.rssi = rssi
        up = link_up_matrix(rssi, self.link, self.sens, self.radio.hysteresis)
        up &= online[:, None] & online[None, :]
        self.link = up
        if self._due(now_ms, "beacon"):
            self.beacons.receive(up, now)
        fresh = self.beacons.fresh(now)
        adj = up & up.T & fresh & fresh.T
        if self.wifi is not None and self.nv:
            wdist = dist[:self.nv, self.nv:]
            wr = rssi_matrix(self.wifi, np.full(self.nv, self.wifi.tx_power), wdist)
            self.wifi_rssi = wr
            wup = link_up_matrix(wr, self.wifi_link, np.full(self.n - self.nv, self.wifi.sensitivity),
                                 self.wifi.hysteresis)
            self.wifi_link = wup & online[:self.nv, None] & online[None, self.nv:]
        return adj

    def _route(self, adj: np.ndarray) -> None:
        w = self.world
        greedy = self.sc.routing_strategy == GREEDY_GEO
        key = adj.tobytes()
        if key == self._adj_key and not greedy:
            return
        self._adj_key = key
        topo = Topology.from_matrix(w.ids, adj, self.rsu_ids, w.positions if greedy else None)
        if greedy:
            self._paths = [greedy_geo_path(w.ids[v], topo) for v in range(self.nv)]
        else:
            dist = gateway_distances(topo)
            self._paths = [min_hop_path(w.ids[v], topo, dist) for v in range(self.nv)]

    def run(self) -> RunResult:
        sc, w, out = self.sc, self.world, self.writer
        out.write({
            "type": "meta", "kind": "start", "t": 0.0, "version": __version__, "seed": sc.seed,
            "duration": sc.duration, "tick": sc.tick, "trace_interval": sc.trace_interval,
            "map_bounds": {"x_min": sc.map_bounds.x_min, "y_min": sc.map_bounds.y_min,
                           "x_max": sc.map_bounds.x_max, "y_max": sc.map_bounds.y_max},
            "rsus": [{"id": r.id, "position": list(r.position)} for r in sc.rsus],
            "vehicles": [v.id for v in sc.vehicles],
            "routing_strategy": sc.routing_strategy,
            "radio": sc.radio_params.to_dict(),
            "cellular": sc.cellular.enabled,
        })
        dt = sc.dt
        for k in range(sc.n_ticks):
            if k:
                w.step(dt)
            self._tick(w.now_ms, w.now, dt, first=(k == 0))
        end = w.now_ms / 1000.0 + dt
        for vid, q in self.queues.items():
            for j in q:
                if j.job_id not in self._reported:
                    out.write({"type": "job", "t": end, **j.summary()})
        out.write({"type": "meta", "kind": "end", "t": end, "counts": dict(sorted(out.counts.items()))})
        return RunResult(dict(out.counts), out.digest, self.queues, self.registry, self.deployments,
                         {vid: wd.reboots for vid, wd in self.watchdogs.items()})

    def _tick(self, now_ms: int, now: float, dt: float, first: bool) -> None:
        sc, w = self.sc, self.world
        nv = self.nv
        control: list[dict] = []
        events: list[dict] = []
        transfers: list[dict] = []
        jobs: list[dict] = []
        probes: list[dict] = []

        # control plane: freezes, deployments, reboot completions
        if sc.control.freeze_rate > 0 and nv:
            p = sc.control.freeze_rate * dt / 3600.0
            hit = self.control_rng.random(nv) < p
            w.frozen[:nv] |= hit & (self.offline_until[:nv] <= now)
        while (self._next_deploy < len(self._deploy_specs)
               and self._deploy_specs[self._next_deploy].start <= now):
            spec = self._deploy_specs[self._next_deploy]
            self._next_deploy += 1
            dep = self.deployments.get(spec.node)
            if dep is None:
                dep = self.deployments[spec.node] = Deployment(spec.node, dict(sc.control.phase_durations))
            if dep.state.phase not in ("idle", "rolled_back"):
                continue
            dep.fail_at = spec.fail_at
            st = dep.start(now)
            control.append({"t": now, "node": spec.node, "kind": "deploy_phase",
                            "detail": {"phase": st.phase, "since": st.phase_started}})
        for node, dep in self.deployments.items():
            i = w.index[node]
            fail_at = dep.fail_at
            if (fail_at is not None and dep.state.phase == fail_at
                    and now >= dep.state.phase_started + dep.durations[fail_at] / 2):
                dep.fail_at = None
                entered = [dep.fail(now)]
            else:
                entered = dep.advance(now)
            for st in entered:
                control.append({"t": now, "node": node, "kind": "deploy_phase",
                                "detail": {"phase": st.phase, "since": st.phase_started}})
                w.boot_partition[i] = st.active_partition
                if st.phase == REBOOTING:
                    self.offline_until[i] = st.phase_started + dep.durations[REBOOTING]
                    self._drop_node(i)
                elif st.phase == ACTIVE2:
                    self.offline_until[i] = min(self.offline_until[i], now)
        back = (self.offline_until[:nv] > now - dt) & (self.offline_until[:nv] <= now)
        for v in np.flatnonzero(back):
            self.watchdogs[w.ids[v]].last_reply = now

        online = self._online(now)
        adj = self._links(online, now_ms, now)
        self._route(adj)

        # reachability and connectivity edges
        hb = self._due(now_ms, "heartbeat") and not first
        sample = self._due(now_ms, "trace")
        has_path = np.array([p is not None for p in self._paths], dtype=bool)
        wifi_gw: list[int | None] = [None] * nv
        if self.wifi is not None:
            for v in np.flatnonzero(online[:nv] & self.wifi_link.any(axis=1)):
                wifi_gw[v] = self._wifi_candidate(v)
        has_wifi = np.array([g is not None for g in wifi_gw], dtype=bool)
        reach = online[:nv] & (has_path | has_wifi)
        changed = np.flatnonzero(reach != self.reachable) if not first else np.flatnonzero(~reach)
        for v in changed:
            events.append({"t": now, "node": w.ids[v], "kind": CONNECT if reach[v] else DISCONNECT})
        self.reachable = reach

        # interface choice
        choice_records = []
        prev_choice = list(self.choice)
        # Between samples the choice is a function of (online, path, wifi) alone,
        # unless both mesh interfaces are up and must be scored.
        state_key = (online[:nv].tobytes(), self._adj_key, has_wifi.tobytes())
        rescore = sample or hb or first or state_key != self._choice_key or bool((has_path & has_wifi).any())
        self._choice_key = state_key
        for v in (range(nv) if rescore else ()):
            vid = w.ids[v]
            q = self.queues[vid]
            head = q.head
            realtime = bool(head is not None and head.realtime)
            path = self._paths[v] if online[v] else None
            if not online[v]:
                self.choice[v] = NO_CHOICE
                choice = None
            elif sample or hb or (path is not None and wifi_gw[v] is not None):
                cands = []
                if path is not None:
                    nh = w.index[path.next_hop]
                    cands.append((DSRC, self._factors(v, nh, path.hop_count, self.rssi[nh, v])))
                if wifi_gw[v] is not None:
                    g = wifi_gw[v]
                    cands.append((WIFI, self._factors(v, nv + g, 1, self.wifi_rssi[v, g])))
                try:
                    choice = select_interface(vid, cands, sc.connman_weights, realtime, bounds=self.bounds,
                                              cellular_enabled=sc.cellular.enabled, t=now)
                    self.choice[v] = choice.choice
                except NoInterfaceError:
                    choice = None
                    self.choice[v] = NO_CHOICE
            else:
                choice = None
                if path is not None:
                    self.choice[v] = DSRC
                elif wifi_gw[v] is not None:
                    self.choice[v] = WIFI
                else:
                    self.choice[v] = CELLULAR if sc.cellular.enabled else NO_CHOICE
            if sample:
                hop = path.hop_count if path is not None else (1 if wifi_gw[v] is not None else None)
                choice_records.append({
                    "type": "choice", "t": now, "node": vid, "choice": self.choice[v],
                    "score": _r(choice.score, 6) if choice is not None else 0.0,
                    "hop_count": hop if self.choice[v] != CELLULAR else None,
                    "realtime": realtime,
                })
            if self.choice[v] != prev_choice[v] and self.choice[v] != NO_CHOICE:
                addr = self._new_address(v, self.choice[v])
                self.registry.register(vid, addr, now)
                control.append({"t": now, "node": vid, "kind": "register", "detail": {"address": addr}})

        # DTN service
        while self._next_job < len(self._jobs) and self._jobs[self._next_job].created <= now:
            js = self._jobs[self._next_job]
            self._next_job += 1
            self.queues[js.node].enqueue(TransferJob(js.job_id, js.size, js.priority, js.created,
                                                     js.effective_deadline, js.direction, js.realtime,
                                                     node=js.node))
            self._busy.add(w.index[js.node])
        for v in sorted(self._busy):
            vid = w.ids[v]
            q = self.queues[vid]
            if not q.pending():
                self._busy.discard(v)
                continue
            recs = []
            if online[v]:
                recs += q.deadline_fallback(now, sc.cellular.rate, dt, sc.cellular.enabled)
            ch = self.choice[v]
            path = self._paths[v]
            if ch in (DSRC, WIFI):
                if ch == DSRC:
                    rate, gw = self._path_rate(path), path.gateway
                else:
                    g = wifi_gw[v]
                    p = pdr(self.wifi_rssi[v, g], self.wifi)
                    rate, gw = self.wifi.throughput * p * (1.0 - sc.cross_traffic), w.ids[nv + g]
                if self.probe_debt[v] > 0:
                    used = min(self.probe_debt[v], rate * dt)
                    self.probe_debt[v] -= used
                    rate = max(rate - used / dt, 0.0)
                recs += q.tick_transfer(True, rate, dt, now, ch, gw)
            elif ch == CELLULAR and q.head is not None and q.head.realtime:
                recs += q.tick_transfer(True, sc.cellular.rate, dt, now, CELLULAR, None, realtime_only=True)
            else:
                q.tick_transfer(False, 0.0, dt, now)
            by_id = {j.job_id: j for j in q}
            for r in recs:
                transfers.append({"type": "transfer", "t": now, "node": vid, "job": r.job_id,
                                  "interface": r.interface, "bytes": r.bytes, "rate": _r(r.rate),
                                  "gateway": r.gateway, "direction": by_id[r.job_id].direction})
            for j in q:
                if j.state in TERMINAL and j.job_id not in self._reported:
                    self._reported.add(j.job_id)
                    jobs.append({"type": "job", "t": now, **j.summary()})

        # probing of each vehicle's first-hop link
        if self._due(now_ms, "probe") and not first:
            cfg = sc.probe_config
            for v in range(nv):
                path = self._paths[v]
                if not online[v] or path is None:
                    continue
                nh = w.index[path.next_hop]
                r = float(min(self.rssi[v, nh], self.rssi[nh, v]))
                p = min(pdr(self.rssi[v, nh], self.radio, self.sens[nh]),
                        pdr(self.rssi[nh, v], self.radio, self.sens[v]))
                s = probe_round(now, (w.ids[v], path.next_hop), self.throughput, sc.cross_traffic, cfg,
                                _r(r), _r(p, 6), self.probe_rng)
                rec = s.to_record()
                for key in ("capacity", "avail_bw", "avail_bw_lossy", "rtt", "jitter"):
                    rec[key] = _r(rec[key])
                probes.append(rec)
                self.probe_debt[v] = 8.0 * cfg.round_bytes

        # heartbeats and watchdog
        if hb:
            for v in range(nv):
                vid = w.ids[v]
                if self.offline_until[v] > now:
                    continue
                wd = self.watchdogs[vid]
                wd.frozen = bool(w.frozen[v])
                if online[v] and self.choice[v] != NO_CHOICE:
                    wd.reply(now)
                if wd.step(now) == REBOOT:
                    w.frozen[v] = False
                    self.offline_until[v] = now + wd.reboot_duration
                    self._drop_node(v)
                    self.choice[v] = NO_CHOICE
                    control.append({"t": now, "node": vid, "kind": "reboot",
                                    "detail": {"until": now + wd.reboot_duration}})
                    dep = self.deployments.get(vid)
                    if dep is not None and dep.state.phase not in ("idle", "rolled_back"):
                        st = dep.fail(now)
                        w.boot_partition[v] = st.active_partition
                        control.append({"t": now, "node": vid, "kind": "deploy_phase",
                                        "detail": {"phase": st.phase, "since": st.phase_started}})

        out = self.writer
        for rec in control:
            out.write({"type": "control", **rec})
        for rec in events:
            out.write({"type": "event", **rec})
        if sample:
            for v in range(nv):
                h = w.heading[v]
                out.write({"type": "position", "t": now, "node": w.ids[v], "x": _r(w.positions[v, 0]),
                           "y": _r(w.positions[v, 1]), "speed": _r(w.speed[v]),
                           "heading": None if np.isnan(h) else _r(h, 6)})
            for v in range(nv):
                path = self._paths[v] if online[v] else None
                if path is not None:
                    hop, gw = path.hop_count, path.gateway
                elif online[v] and wifi_gw[v] is not None:
                    hop, gw = 1, w.ids[nv + wifi_gw[v]]
                else:
                    hop, gw = None, None
                out.write({"type": "reachability", "t": now, "node": w.ids[v], "hop_count": hop, "gateway": gw})
            for rec in choice_records:
                out.write(rec)
        for rec in transfers:
            out.write(rec)
        for rec in jobs:
            out.write(rec)
        for rec in probes:
            out.write(rec)

    def _drop_node(self, i: int) -> None:
        self.link[i, :] = False
        self.link[:, i] = False
        self.beacons.forget(i)
        self.beacons.last_heard[i, :] = -np.inf
        if i < self.nv:
            self.wifi_link[i, :] = False


def simulate(scenario: Scenario, writer: TraceWriter | None = None) -> RunResult:
    return Simulation(scenario, writer).run()
