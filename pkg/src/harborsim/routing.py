"""Neighbour tables built from beacons and gateway path selection.

Two strategies are available: ``min_hop`` (breadth-first shortest path to
any RSU) and ``greedy_geo`` (greedy geographic forwarding toward the
nearest RSU, without a recovery mode). Among equal-cost candidates the
lowest node id always wins.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

MIN_HOP = "min_hop"
GREEDY_GEO = "greedy_geo"
STRATEGIES = (MIN_HOP, GREEDY_GEO)

EXPIRY_FACTOR = 3


@dataclass(frozen=True)
class Beacon:
    sender: str
    position: tuple[float, float]
    rssi: float
    timestamp: float


@dataclass
class NeighborEntry:
    neighbor: str
    last_beacon: float
    rssi: float
    position: tuple[float, float]
    expiry: float


@dataclass
class NeighborTable:
    owner: str
    entries: dict[str, NeighborEntry] = field(default_factory=dict)

    def purge(self, now: float) -> None:
        for nid in [n for n, e in self.entries.items() if e.expiry < now]:
            del self.entries[nid]

    def query(self, now: float) -> list[NeighborEntry]:
        """Live entries sorted by neighbour id."""
        return [self.entries[n] for n in sorted(self.entries) if self.entries[n].expiry >= now]

    def __contains__(self, neighbor: str) -> bool:
        return neighbor in self.entries


def update_neighbors(table: NeighborTable, beacon: Beacon, now: float,
                     beacon_period: float = 1.0) -> NeighborTable:
    """Upsert the sender of `beacon` and drop anything already expired."""
    if beacon.sender != table.owner:
        table.entries[beacon.sender] = NeighborEntry(
            neighbor=beacon.sender,
            last_beacon=beacon.timestamp,
            rssi=beacon.rssi,
            position=beacon.position,
            expiry=beacon.timestamp + EXPIRY_FACTOR * beacon_period,
        )
    table.purge(now)
    return table


class BeaconMatrix:
    """Dense equivalent of one NeighborTable per node, used by the simulator.

    ``last_heard[i, j]`` is the time receiver j last heard sender i.
    """

    def __init__(self, n: int, beacon_period: float):
        self.beacon_period = beacon_period
        self.last_heard = np.full((n, n), -np.inf)

    def receive(self, heard: np.ndarray, now: float) -> None:
        self.last_heard[heard] = now

    def fresh(self, now: float) -> np.ndarray:
        return self.last_heard + EXPIRY_FACTOR * self.beacon_period >= now

    def forget(self, node: int) -> None:
        """Drop everything a rebooting node knew."""
        self.last_heard[:, node] = -np.inf


@dataclass(frozen=True)
class Topology:
    """Immutable adjacency snapshot; neighbour tuples are sorted by id."""

    adjacency: Mapping[str, tuple[str, ...]]
    rsus: frozenset[str]
    positions: Mapping[str, tuple[float, float]] = field(default_factory=dict)

    @classmethod
    def from_edges(cls, nodes: Iterable[str], edges: Iterable[tuple[str, str]], rsus: Iterable[str],
                   positions: Mapping[str, tuple[float, float]] | None = None) -> "Topology":
        adj: dict[str, set[str]] = {n: set() for n in nodes}
        for a, b in edges:
            if a == b:
                continue
            adj[a].add(b)
            adj[b].add(a)
        return cls({n: tuple(sorted(s)) for n, s in adj.items()}, frozenset(rsus), dict(positions or {}))

    @classmethod
    def from_matrix(cls, ids: list[str], adjacency: np.ndarray, rsus: Iterable[str],
                    positions: np.ndarray | None = None) -> "Topology":
        adj = {}
        for i, nid in enumerate(ids):
            adj[nid] = tuple(sorted(ids[j] for j in np.flatnonzero(adjacency[i]) if j != i))
        pos = {} if positions is None else {nid: (float(positions[i, 0]), float(positions[i, 1]))
                                            for i, nid in enumerate(ids)}
        return cls(adj, frozenset(rsus), pos)

    def neighbors(self, node: str) -> tuple[str, ...]:
        return self.adjacency.get(node, ())


@dataclass(frozen=True)
class Path:
    hops: tuple[str, ...]

    @property
    def hop_count(self) -> int:
        return len(self.hops) - 1

    @property
    def gateway(self) -> str:
        return self.hops[-1]

    @property
    def next_hop(self) -> str:
        return self.hops[1]


def gateway_distances(topology: Topology) -> dict[str, int]:
    """Hop count from every node that can reach an RSU (RSUs themselves at 0)."""
    dist = {r: 0 for r in sorted(topology.rsus) if r in topology.adjacency}
    frontier = deque(dist)
    while frontier:
        cur = frontier.popleft()
        for nb in topology.neighbors(cur):
            if nb not in dist:
                dist[nb] = dist[cur] + 1
                frontier.append(nb)
    return dist


def min_hop_path(source: str, topology: Topology, dist: Mapping[str, int] | None = None) -> Path | None:
    """Shortest path to any RSU; each hop picks the lowest-id neighbour one step closer."""
    if dist is None:
        dist = gateway_distances(topology)
    if source not in dist or source in topology.rsus:
        return None
    hops = [source]
    cur = source
    while dist[cur] > 0:
        want = dist[cur] - 1
        cur = next(nb for nb in topology.neighbors(cur) if dist.get(nb) == want)
        hops.append(cur)
    return Path(tuple(hops))


def _dist(a: tuple[float, float], b: tuple[float, float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def greedy_geo_path(source: str, topology: Topology) -> Path | None:
    """Greedy geographic forwarding toward the RSU nearest the source.

    Fails at a local minimum, i.e. when no neighbour is strictly closer to
    the target than the current node.
    """
    if source in topology.rsus or not topology.rsus:
        return None
    pos = topology.positions
    if source not in pos:
        raise ValueError(f"greedy_geo needs node positions (none for {source!r})")
    here = pos[source]
    target = min(sorted(topology.rsus), key=lambda r: _dist(here, pos[r]))
    goal = pos[target]
    hops = [source]
    cur = source
    while cur not in topology.rsus:
        best = None
        best_d = _dist(pos[cur], goal)
        for nb in topology.neighbors(cur):
            d = _dist(pos[nb], goal)
            if d < best_d:
                best, best_d = nb, d
        if best is None:
            return None
        hops.append(best)
        cur = best
    return Path(tuple(hops))


def compute_path(source: str, topology: Topology, strategy: str = MIN_HOP) -> Path | None:
    if strategy == MIN_HOP:
        return min_hop_path(source, topology)
    if strategy == GREEDY_GEO:
        return greedy_geo_path(source, topology)
    raise ValueError(f"unknown routing strategy {strategy!r}")
