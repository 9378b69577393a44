import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aivv.telemetry import (FaultKind, FaultSpec, NoiseSpec, Scenario, SimConfig, dataset_for,
                            load_dataset, make_windows, save_dataset, simulate, speed_profile,
                            window_pairs)


def test_window_counts_for_default_split(hover):
    train, test = make_windows(hover)
    assert (len(train), len(test)) == (969, 409)
    assert train.raw_index[0] == 11 and test.raw_index[0] == 980 + 11


def test_window_targets_sit_h_steps_ahead():
    series = np.arange(30.0)
    p = window_pairs(series, W=10, H=2)
    assert np.array_equal(p.inputs[0], np.arange(10.0))
    assert p.targets[0] == 11.0
    assert np.all(p.targets == series[p.raw_index])


def test_short_series_rejected():
    with pytest.raises(ValueError):
        window_pairs(np.zeros(5), W=10, H=2)


@pytest.mark.parametrize("scenario", list(Scenario))
def test_simulation_is_deterministic_per_seed(scenario):
    a = dataset_for(scenario, 3)
    b = dataset_for(scenario, 3)
    c = dataset_for(scenario, 4)
    assert np.array_equal(a.yaw, b.yaw)
    assert not np.array_equal(a.yaw, c.yaw)


def test_spike_labels_and_onset(hover):
    assert hover.fault.kind is FaultKind.ELECTRICAL_SPIKE
    assert np.flatnonzero(hover.fault_mask).tolist() == list(range(1200, 1210))
    jump = hover.yaw[1200:1210] - hover.true_yaw[1200:1210]
    assert np.all(jump > 10)


def test_damper_fault_runs_away():
    ds = dataset_for("complex", 2)
    assert ds.fault.kind is FaultKind.MECHANICAL_DAMPER
    assert ds.fault_mask[1200:].all() and not ds.fault_mask[:1200].any()
    err = np.abs(ds.true_yaw - ds.setpoint)
    assert err[1300:].max() > 5 * err[:1200].max()


def test_nominal_tracking_without_fault():
    ds = simulate(SimConfig(scenario=Scenario.HOVERING, seed=0), NoiseSpec(scale=0.0), None)
    assert not ds.fault_mask.any()
    assert np.abs(ds.true_yaw - ds.setpoint)[-140:].max() < 2.0


def test_speed_profile_only_varies_on_complex_mission():
    assert np.all(speed_profile("hover", 500) == 1.0)
    s = speed_profile("complex", 1400, seed=5)
    assert s.min() > 0.5 and s.max() > 1.4


def test_fault_spec_validation():
    with pytest.raises(ValueError):
        FaultSpec("damper", magnitude=1.5)
    with pytest.raises(ValueError):
        simulate(SimConfig(n_steps=100), fault=FaultSpec("spike", onset=200))
    assert FaultSpec("spike").magnitude == 15.0


def test_dataset_roundtrip(tmp_path, hover):
    path = tmp_path / "d1.csv"
    save_dataset(hover, path)
    back = load_dataset(path)
    assert np.array_equal(back.yaw, hover.yaw)
    assert np.array_equal(back.fault_mask, hover.fault_mask)
    assert back.config == hover.config and back.fault == hover.fault


def test_missing_dataset_message(tmp_path):
    with pytest.raises(FileNotFoundError, match="dataset not found"):
        load_dataset(tmp_path / "nope.csv")


@settings(max_examples=200, deadline=None)
@given(st.integers(12, 3000))
def test_pair_count_formula(n):
    assert len(window_pairs(np.zeros(n), W=10, H=2)) == n - 11


def test_spike_recovers_within_twice_the_pre_fault_peak():
    for scenario in ("hover", "lawnmower"):
        for seed in range(3):
            ds = dataset_for(scenario, seed)
            settle = 50
            after = np.abs(ds.yaw[1210 + settle:]).max()
            assert after <= 2 * np.abs(ds.yaw[:1200]).max()
