from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harborsim.probe import (ProbeConfig, estimate_available_bw, estimate_capacity, link_metrics, pair_dispersions,
                             probe_round, train_output_rate)

CFG = ProbeConfig()


@pytest.mark.parametrize("disp,want", [([1e-3, 1e-3, 1e-3], 12e6), ([1e-3, 1e-3, 10e-3], 12e6), ([2e-3], 6e6)])
def test_capacity_examples(disp, want):
    assert estimate_capacity(disp, 1500) == pytest.approx(want)


def test_capacity_rejects_bad_input():
    with pytest.raises(ValueError):
        estimate_capacity([], 1500)
    with pytest.raises(ValueError):
        estimate_capacity([0.0, 1e-3], 1500)


@pytest.mark.parametrize("r,want", [(6e6, 6e6), (3e6, 0.0), (9e6, 6e6), (1e6, 0.0), (4e6, 3e6)])
def test_available_bw_examples(r, want):
    assert estimate_available_bw(6e6, r) == pytest.approx(want)


def test_link_metric_examples():
    assert link_metrics([10, 10, 10], 0.0, 1.0)[1] == 0.0
    rtt, jitter, _ = link_metrics([10, 20, 10], 0.0, 1.0)
    assert jitter == pytest.approx(10.0) and rtt == pytest.approx(40 / 3)
    assert link_metrics([5.0], 0.25, 4e6)[2] == pytest.approx(3e6)
    with pytest.raises(ValueError):
        link_metrics([1.0], 1.5, 1.0)


@given(st.floats(0.1, 500), st.integers(1, 50))
def test_constant_rtt_has_zero_jitter(v, n):
    assert link_metrics([v] * n, 0.0, 1.0)[1] == 0.0


def test_round_bytes():
    assert CFG.round_bytes == (20 + 30) * 1500


@pytest.mark.parametrize("kwargs", [{"pair_count": 0}, {"train_length": 1}, {"probe_size": 0}, {"period": 0}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        ProbeConfig(**kwargs)


def test_idle_link_dispersion_is_serialisation_time():
    rng = np.random.default_rng(0)
    d = pair_dispersions(6e6, 0.0, CFG, rng)
    assert np.median(d) == pytest.approx(2e-3, rel=0.05)
    assert train_output_rate(6e6, 0.0, 6e6, CFG, rng) == pytest.approx(6e6, rel=0.05)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(1e5, 5e7), st.floats(0, 0.9), st.floats(0, 1))
def test_sample_ordering(seed, capacity, x, p):
    s = probe_round(0.0, ("a", "b"), capacity, x, CFG, -80.0, p, np.random.default_rng(seed))
    assert 0.0 <= s.avail_bw_lossy <= s.avail_bw <= s.capacity
    assert s.rtt > 0 and s.jitter >= 0


@pytest.mark.parametrize("capacity", [2.76e6, 6e6, 12e6])
# Beyond x ~ 0.5 most pairs carry a cross packet and the median pair stops
# reflecting capacity; that regime is out of the estimator's scope.
@pytest.mark.parametrize("x", [0.0, 0.2, 0.4, 0.5])
def test_estimator_soundness(capacity, x):
    rng = np.random.default_rng(int(capacity) + int(100 * x))
    samples = [probe_round(float(k), ("a", "b"), capacity, x, CFG, -70.0, 1.0, rng) for k in range(100)]
    cap = np.median([s.capacity for s in samples])
    avail = np.median([s.avail_bw for s in samples])
    assert abs(cap - capacity) / capacity <= 0.15
    assert abs(avail - capacity * (1 - x)) / (capacity * (1 - x)) <= 0.20


def test_to_record_shape():
    s = probe_round(3.0, ("v", "r"), 6e6, 0.1, CFG, -71.0, 0.99, np.random.default_rng(1))
    rec = s.to_record()
    assert rec["type"] == "probe" and rec["link"] == ["v", "r"] and rec["t"] == 3.0
