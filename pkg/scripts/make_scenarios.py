#!/usr/bin/env python3
"""Regenerate the shipped scenario files under src/harborsim/scenarios/.

The default port scenario is drawn from a fixed seed, so re-running this
script reproduces the committed JSON byte for byte.
"""

import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "harborsim" / "scenarios"

RADIO = {
    "tx_power": 14.58,
    "obu_tx_power": 12.51,
    "antenna_gain_tx": 2.0,
    "antenna_gain_rx": 2.0,
    "sensitivity": -95.0,
    "sensitivity_spread": 2.0,
    "pl_exponent": 2.7,
    "pl_ref": 47.8,
    "shadowing_sigma": 0.0,
    "link_rate": 6e6,
    "channel_mode": "alternate",
    "switch_interval": 50.0,
    "guard": 4.0,
    "hysteresis": 3.0,
    "channel": 175,
    "center_frequency": 5.875e9,
    "bandwidth": 10e6,
}


def rect(x0, y0, w, h, start):
    corners = [[x0, y0], [x0 + w, y0], [x0 + w, y0 + h], [x0, y0 + h]]
    corners = corners[start:] + corners[:start]
    return corners + [corners[0]]


def default_port():
    rng = random.Random(2014)
    rsus = [
        {"id": "rsu1", "position": [220.0, 260.0]},
        {"id": "rsu2", "position": [640.0, 200.0]},
        {"id": "rsu3", "position": [470.0, 720.0]},
    ]
    vehicles = []
    jobs = []
    for i in range(35):
        vid = f"v{i + 1:02d}"
        w = rng.choice([200, 300, 400, 500, 600, 700])
        h = rng.choice([150, 200, 300, 400, 500])
        x0 = rng.randrange(20, 980 - w, 10)
        y0 = rng.randrange(20, 980 - h, 10)
        speed = round(rng.uniform(3.0, 8.0), 1)
        vehicles.append({"id": vid, "route": rect(float(x0), float(y0), float(w), float(h), rng.randrange(4)),
                         "speed": speed, "route_policy": "loop"})
        for k in range(2):
            jobs.append({"job_id": f"{vid}-log{k + 1}", "node": vid, "direction": "upload",
                         "size": rng.randrange(1_000_000, 6_000_000, 1000),
                         "priority": 1, "created": float(rng.randrange(0, 5400, 30))})
        if i % 7 == 0:
            jobs.append({"job_id": f"{vid}-image", "node": vid, "direction": "download",
                         "size": 12_000_000, "priority": 5, "created": 600.0})
        if i % 11 == 3:
            jobs.append({"job_id": f"{vid}-alarm", "node": vid, "direction": "upload", "size": 50_000,
                         "priority": 9, "created": float(rng.randrange(300, 6000, 60)),
                         "deadline": None, "realtime": True})
    return {
        "seed": 2014,
        "duration": 7200.0,
        "tick": 100,
        "map_bounds": {"x_min": 0.0, "y_min": 0.0, "x_max": 1000.0, "y_max": 1000.0},
        "rsus": rsus,
        "vehicles": vehicles,
        "radio_params": RADIO,
        "connman_weights": {"w_speed": 0.2, "w_heading": 0.2, "w_hops": 0.2, "w_distance": 0.2, "w_rssi": 0.2},
        "dtn_jobs": jobs,
        "probe_config": {"pair_count": 10, "train_length": 30, "probe_size": 1500, "period": 10.0},
        "routing_strategy": "min_hop",
        "beacon_period": 1.0,
        "trace_interval": 1.0,
        "cross_traffic": 0.0,
        "cellular": {"enabled": True, "rate": 1e6},
        "control": {
            "heartbeat_period": 10.0,
            "loss_threshold": 120.0,
            "reboot_duration": 60.0,
            "freeze_rate": 0.05,
            "deployments": [
                {"node": "v05", "start": 900.0},
                {"node": "v12", "start": 900.0, "fail_at": "unpacking"},
            ],
        },
        "metadata": {
            "description": "35 container trucks on rectangular yard circuits, 3 RSUs, 1 km x 1 km port",
            "assumptions": [
                "truck speeds 3-8 m/s and rectangular circuits are illustrative, not measured",
                "RSUs transmit at 14.58 dBm and OBUs at 12.51 dBm",
            ],
        },
    }


def calibrated_rate():
    # One truck: a five-row loading-yard zigzag within 100 m of the RSU, then
    # a long haul to the far quay and back, out of range.
    yard = []
    y = 460.0
    for row in range(5):
        xs = (420.0, 580.0) if row % 2 == 0 else (580.0, 420.0)
        yard += [[xs[0], y], [xs[1], y]]
        y += 30.0
    haul = [[420.0, 980.0], [40.0, 980.0], [40.0, 60.0], [420.0, 60.0], [420.0, 460.0]]
    route = yard + haul
    # Guard 0: alternate-channel access yields exactly half of the 6 Mb/s link.
    radio = dict(RADIO, obu_tx_power=None, sensitivity_spread=0.0, guard=0.0)
    return {
        "seed": 7,
        "duration": 3600.0,
        "tick": 100,
        "map_bounds": {"x_min": 0.0, "y_min": 0.0, "x_max": 1000.0, "y_max": 1000.0},
        "rsus": [{"id": "rsu1", "position": [500.0, 520.0]}],
        "vehicles": [{"id": "truck", "route": route, "speed": 6.0, "route_policy": "loop"}],
        "radio_params": radio,
        "dtn_jobs": [{"job_id": "logs", "node": "truck", "direction": "upload", "size": 400_000_000,
                      "priority": 1, "created": 0.0, "deadline": 3600.0}],
        "cellular": {"enabled": True, "rate": 1e6},
        "metadata": {
            "description": "single truck, 6 Mb/s alternate-channel DSRC, roughly 40% connected time",
        },
    }


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, doc in (("default", default_port()), ("calibrated_rate", calibrated_rate())):
        (OUT / f"{name}.json").write_text(json.dumps(doc, indent=1) + "\n")
        print(f"wrote {OUT / name}.json")


if __name__ == "__main__":
    main()
