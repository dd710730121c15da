"""Per-link measurement by probe dispersion.

Capacity comes from the median packet-pair dispersion; available bandwidth
from the output rate R of a packet train sent at the estimated capacity,
A = Ce * (2 - Ce / R), clamped to [0, Ce]. Links are simulated as a FIFO
bottleneck carrying Poisson cross traffic, so the true available bandwidth
is C * (1 - x) for cross-traffic fraction x.

The median-pair capacity estimate is only trustworthy while most pairs go
through undisturbed; with the default 10 pairs it breaks down above x ~ 0.5.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, fields
from typing import Any, Sequence

import numpy as np

CROSS_PACKET_SIZE = 1500
TIMESTAMP_NOISE = 0.02  # relative std-dev of measured dispersions


@dataclass(frozen=True)
class ProbeConfig:
    pair_count: int = 10
    train_length: int = 30
    probe_size: int = 1500
    period: float = 10.0

    def __post_init__(self) -> None:
        if self.pair_count < 1:
            raise ValueError(f"pair_count must be >= 1, got {self.pair_count}")
        if self.train_length < 2:
            raise ValueError(f"train_length must be >= 2, got {self.train_length}")
        if self.probe_size <= 0:
            raise ValueError(f"probe_size must be > 0, got {self.probe_size}")
        if self.period <= 0:
            raise ValueError(f"period must be > 0, got {self.period}")

    @property
    def round_bytes(self) -> int:
        """Bytes one probe round puts on the link."""
        return (2 * self.pair_count + self.train_length) * self.probe_size

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ProbeConfig":
        return cls(**data)

    def to_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class LinkSample:
    t: float
    link: tuple[str, str]
    capacity: float
    avail_bw: float
    avail_bw_lossy: float
    rtt: float
    jitter: float
    rssi: float
    pdr: float

    def to_record(self) -> dict[str, Any]:
        return {"type": "probe", "t": self.t, "link": list(self.link), "capacity": self.capacity,
                "avail_bw": self.avail_bw, "avail_bw_lossy": self.avail_bw_lossy, "rtt": self.rtt,
                "jitter": self.jitter, "rssi": self.rssi, "pdr": self.pdr}


def estimate_capacity(pair_dispersions: Sequence[float], probe_size: int) -> float:
    """Bits/s from the median packet-pair dispersion (seconds)."""
    if not pair_dispersions:
        raise ValueError("need at least one packet-pair dispersion")
    if any(d <= 0 for d in pair_dispersions):
        raise ValueError("dispersions must be > 0")
    return 8.0 * probe_size / statistics.median(pair_dispersions)


def estimate_available_bw(capacity: float, train_rate: float) -> float:
    if capacity <= 0 or train_rate <= 0:
        raise ValueError("capacity and train_rate must be > 0")
    a = capacity * (2.0 - capacity / train_rate)
    return min(max(a, 0.0), capacity)


def link_metrics(rtt_samples: Sequence[float], loss_rate: float, avail_bw: float) -> tuple[float, float, float]:
    """(mean rtt, mean |consecutive rtt difference|, loss-discounted available bandwidth)."""
    if not rtt_samples:
        raise ValueError("need at least one RTT sample")
    if not 0.0 <= loss_rate <= 1.0:
        raise ValueError(f"loss_rate must be in [0, 1], got {loss_rate}")
    rtt = sum(rtt_samples) / len(rtt_samples)
    diffs = [abs(b - a) for a, b in zip(rtt_samples, rtt_samples[1:])]
    jitter = sum(diffs) / len(diffs) if diffs else 0.0
    return rtt, jitter, avail_bw * (1.0 - loss_rate)


def pair_dispersions(capacity: float, cross_fraction: float, config: ProbeConfig,
                     rng: np.random.Generator) -> np.ndarray:
    """Back-to-back pairs: any cross packet that slips between them widens the gap."""
    service = 8.0 * config.probe_size / capacity
    # Cross arrivals during one probe service time, expected x * L / Lc.
    k = rng.poisson(cross_fraction * config.probe_size / CROSS_PACKET_SIZE, size=config.pair_count)
    disp = service + k * 8.0 * CROSS_PACKET_SIZE / capacity
    noise = 1.0 + TIMESTAMP_NOISE * rng.standard_normal(config.pair_count)
    return disp * np.clip(noise, 0.5, None)


def train_output_rate(capacity: float, cross_fraction: float, send_rate: float, config: ProbeConfig,
                      rng: np.random.Generator) -> float:
    """Output rate of a train sent at `send_rate` through a FIFO shared with Poisson cross traffic."""
    n = config.train_length
    gap = 8.0 * config.probe_size / send_rate
    window = (n - 1) * gap + 8.0 * config.probe_size / capacity
    lam = cross_fraction * capacity / (8.0 * CROSS_PACKET_SIZE)
    m = rng.poisson(lam * window) if lam > 0 else 0
    cross = np.sort(rng.uniform(0.0, window, size=m))
    # Probe packets win ties; events are (time, is_cross, size).
    events = sorted([(i * gap, 0, config.probe_size) for i in range(n)]
                    + [(float(t), 1, CROSS_PACKET_SIZE) for t in cross])
    free = 0.0
    departures = []
    for t, is_cross, size in events:
        free = max(t, free) + 8.0 * size / capacity
        if not is_cross:
            departures.append(free)
    spread = departures[-1] - departures[0]
    spread *= max(0.5, 1.0 + TIMESTAMP_NOISE / np.sqrt(n) * rng.standard_normal())
    return (n - 1) * 8.0 * config.probe_size / spread


def rtt_samples(capacity: float, cross_fraction: float, config: ProbeConfig, rng: np.random.Generator,
                base_rtt: float = 1.0) -> np.ndarray:
    """RTTs in ms: base + two serialisations + M/D/1-like queueing wait."""
    service_ms = 8000.0 * config.probe_size / capacity
    x = min(cross_fraction, 0.95)
    mean_wait = x / (2.0 * (1.0 - x)) * 8000.0 * CROSS_PACKET_SIZE / capacity
    wait = rng.exponential(mean_wait, size=config.pair_count) if mean_wait > 0 else np.zeros(config.pair_count)
    return base_rtt + 2.0 * service_ms + wait


def probe_round(t: float, link: tuple[str, str], capacity: float, cross_fraction: float,
                config: ProbeConfig, rssi: float, pdr: float, rng: np.random.Generator) -> LinkSample:
    """Run one full measurement round on a simulated link of true capacity `capacity`."""
    ce = estimate_capacity(pair_dispersions(capacity, cross_fraction, config, rng).tolist(), config.probe_size)
    r = train_output_rate(capacity, cross_fraction, ce, config, rng)
    a = estimate_available_bw(ce, r)
    sent = 2 * config.pair_count + config.train_length
    lost = int(rng.binomial(sent, min(max(1.0 - pdr, 0.0), 1.0)))
    rtt, jitter, lossy = link_metrics(rtt_samples(capacity, cross_fraction, config, rng).tolist(),
                                      lost / sent, a)
    return LinkSample(t, link, ce, a, lossy, rtt, jitter, rssi, pdr)
