import numpy as np
import pytest

from aivv.engine import ALPHA_BOUNDS, Engine, EngineConfig, build_engine, param_count, split_fit_cal

from checks import coverage_streams, gradient_probes


def test_bptt_matches_finite_differences():
    assert gradient_probes(40, seed=3).max() < 1e-4


def test_param_count_matches_initialised_tensors():
    e = Engine.init(EngineConfig(hidden_size=6, lstm_layers=2))
    assert e.parameter_vector().size == param_count(1, 6, 2)


def test_fit_cal_split_is_chronological(hover_pairs):
    train, _ = hover_pairs
    fit, cal = split_fit_cal(train, 0.2)
    assert (len(fit), len(cal)) == (775, 194)
    assert fit.raw_index[-1] < cal.raw_index[0]


def test_engine_is_calibrated_on_held_residuals(small_engine):
    e = small_engine
    assert e.calibrated and len(e.cal_residuals) == 194
    assert e.conformal_bound == np.sort(e.cal_residuals)[185]
    assert e.bound_at(0.01) == e.cal_residuals.max()


def test_mc_predictions_are_repeatable_with_a_fixed_generator(small_engine):
    w = np.linspace(0, 1, 10)
    a = small_engine.mc_predict(w, np.random.default_rng(7))
    b = small_engine.mc_predict(w, np.random.default_rng(7))
    assert a.mean == b.mean and a.std == b.std > 0


def test_window_shape_checked(small_engine):
    with pytest.raises(ValueError):
        small_engine.mc_predict(np.zeros(9))


def test_clone_is_isolated(small_engine, hover_pairs):
    train, _ = hover_pairs
    original = small_engine.parameter_hash()
    clone = small_engine.clone()
    clone.recalibrate(0.01)
    assert clone.fine_tune(train[-50:], 50, 1e-3)
    assert clone.parameter_hash() != original
    assert small_engine.parameter_hash() == original


def test_recalibrate_clamps_alpha(small_engine):
    e = small_engine.clone()
    e.recalibrate(0.5)
    assert e.alpha == ALPHA_BOUNDS[1]
    e.recalibrate(0.0)
    assert e.alpha == ALPHA_BOUNDS[0]


def test_training_reduces_loss(hover_pairs):
    train, _ = hover_pairs
    e = build_engine(train, EngineConfig(hidden_size=8, epochs=6, mc_passes=4), seed=2)
    assert e.loss_history[-1] < e.loss_history[0]


def test_checkpoint_roundtrip(tmp_path, small_engine):
    path = tmp_path / "engine.json"
    small_engine.save(path)
    back = Engine.load(path)
    assert back.parameter_hash() == small_engine.parameter_hash()
    w = np.arange(10.0)
    r1 = small_engine.mc_predict(w, np.random.default_rng(1)).mean
    r2 = back.mc_predict(w, np.random.default_rng(1)).mean
    assert r1 == r2


def test_missing_checkpoint(tmp_path):
    with pytest.raises(FileNotFoundError, match="checkpoint not found"):
        Engine.load(tmp_path / "none.json")


def test_config_validation():
    with pytest.raises(ValueError):
        EngineConfig(alpha=0.2)
    with pytest.raises(ValueError):
        EngineConfig(mc_passes=1)


def test_conformal_coverage_small():
    cov = coverage_streams(n_streams=3, n_test=400, seed=9)
    assert np.all(cov > 0.9)


def test_fine_tune_on_fit_set_does_not_hurt_fit_error(small_engine, hover_pairs):
    train, _ = hover_pairs
    fit, _ = split_fit_cal(train, 0.2)
    e = small_engine.clone()
    before = e.mse(fit)
    assert e.fine_tune(fit, 50, 1e-4)
    assert e.mse(fit) <= before * 1.05
