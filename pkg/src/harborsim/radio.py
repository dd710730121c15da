"""Link budget for the 802.11p radios: RSSI, link state, PDR and channel duty."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Any

import numpy as np

# 20*log10(4*pi*f/c) at 5.875 GHz, rounded.
FREE_SPACE_1M_DB = 47.8

CONTINUOUS = "continuous"
ALTERNATE = "alternate"
CHANNEL_MODES = (CONTINUOUS, ALTERNATE)

UP = "up"
DOWN = "down"


@dataclass(frozen=True)
class RadioParams:
    tx_power: float = 14.58
    antenna_gain_tx: float = 2.0
    antenna_gain_rx: float = 2.0
    sensitivity: float = -95.0
    sensitivity_spread: float = 2.0
    pl_exponent: float = 2.7
    pl_ref: float = FREE_SPACE_1M_DB
    shadowing_sigma: float = 0.0
    link_rate: float = 6e6
    channel_mode: str = ALTERNATE
    switch_interval: float = 50.0
    guard: float = 4.0
    hysteresis: float = 3.0
    # OBUs transmit with this power when set; RSUs always use tx_power.
    obu_tx_power: float | None = None
    # Metadata only, never used in the link budget.
    channel: int = 175
    center_frequency: float = 5.875e9
    bandwidth: float = 10e6

    def __post_init__(self) -> None:
        if self.tx_power > 23.0:
            raise ValueError(f"tx_power {self.tx_power} dBm exceeds the 23 dBm setup ceiling")
        if self.obu_tx_power is not None and self.obu_tx_power > 23.0:
            raise ValueError(f"obu_tx_power {self.obu_tx_power} dBm exceeds the 23 dBm setup ceiling")
        if self.sensitivity >= min(self.tx_power, self.obu_tx_power or self.tx_power):
            raise ValueError(f"sensitivity {self.sensitivity} dBm must be below tx_power")
        if self.pl_exponent < 2:
            raise ValueError(f"pl_exponent {self.pl_exponent} must be >= 2")
        if self.channel_mode not in CHANNEL_MODES:
            raise ValueError(f"channel_mode {self.channel_mode!r} not in {CHANNEL_MODES}")
        if self.switch_interval <= 0:
            raise ValueError(f"switch_interval {self.switch_interval} must be > 0")
        if not 0 <= self.guard < self.switch_interval:
            raise ValueError(f"guard {self.guard} must be in [0, switch_interval)")
        if self.sensitivity_spread < 0 or self.shadowing_sigma < 0 or self.hysteresis < 0:
            raise ValueError("sensitivity_spread, shadowing_sigma and hysteresis must be >= 0")
        if self.link_rate <= 0:
            raise ValueError(f"link_rate {self.link_rate} must be > 0")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RadioParams":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown field(s) {unknown}")
        return cls(**data)

    def to_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def transmit_power(self, kind: str) -> float:
        if kind == "vehicle" and self.obu_tx_power is not None:
            return self.obu_tx_power
        return self.tx_power

    @property
    def throughput(self) -> float:
        return effective_throughput(self.link_rate, self.channel_mode, self.switch_interval, self.guard)


def rssi(params: RadioParams, distance: float, noise_draw: float = 0.0) -> float:
    """Log-distance received power in dBm."""
    if distance <= 0:
        raise ValueError(f"distance must be > 0, got {distance}")
    return (params.tx_power + params.antenna_gain_tx + params.antenna_gain_rx
            - params.pl_ref - 10.0 * params.pl_exponent * math.log10(distance) + noise_draw)


def rssi_matrix(params: RadioParams, tx_power: np.ndarray, dist: np.ndarray) -> np.ndarray:
    """Vectorised rssi(): row i transmits at tx_power[i], column j receives.

    Distances must already be clamped to > 0.
    """
    budget = tx_power + params.antenna_gain_tx + params.antenna_gain_rx - params.pl_ref
    return budget[:, None] - 10.0 * params.pl_exponent * np.log10(dist)


def radio_range(params: RadioParams, tx_power: float | None = None) -> float:
    """Distance at which the noiseless RSSI drops to the nominal sensitivity."""
    p = params.tx_power if tx_power is None else tx_power
    margin = p + params.antenna_gain_tx + params.antenna_gain_rx - params.pl_ref - params.sensitivity
    return 10.0 ** (margin / (10.0 * params.pl_exponent))


def link_up(rssi_dbm: float, previous_state: str, params: RadioParams,
            sensitivity: float | None = None) -> str:
    """Hysteretic link state. `sensitivity` overrides the nominal receiver value."""
    sens = params.sensitivity if sensitivity is None else sensitivity
    if previous_state == UP:
        return DOWN if rssi_dbm < sens else UP
    return UP if rssi_dbm >= sens + params.hysteresis else DOWN


def link_up_matrix(rssi_db: np.ndarray, previous: np.ndarray, sensitivity: np.ndarray,
                   hysteresis: float) -> np.ndarray:
    """Vectorised link_up() over a directed rssi matrix; sensitivity is per receiver (column)."""
    sens = sensitivity[None, :]
    stays_up = previous & (rssi_db >= sens)
    comes_up = ~previous & (rssi_db >= sens + hysteresis)
    return stays_up | comes_up


def pdr(rssi_dbm: float, params: RadioParams, sensitivity: float | None = None) -> float:
    """Packet delivery ratio as a logistic curve centred 3 dB above sensitivity."""
    sens = params.sensitivity if sensitivity is None else sensitivity
    z = (rssi_dbm - (sens + 3.0)) / 2.0
    # Split on sign so exp() never overflows.
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def effective_throughput(link_rate: float, channel_mode: str, switch_interval: float,
                         guard: float) -> float:
    """Usable SCH rate: the full link rate, or one slot of each CCH/SCH pair minus guard."""
    if not 0 <= guard < switch_interval:
        raise ValueError(f"guard {guard} must be in [0, {switch_interval})")
    if channel_mode == CONTINUOUS:
        return link_rate
    if channel_mode == ALTERNATE:
        # Ratio first, so guard 0 gives exactly link_rate / 2.
        return link_rate * ((switch_interval - guard) / switch_interval) / 2.0
    raise ValueError(f"unknown channel_mode {channel_mode!r}")
