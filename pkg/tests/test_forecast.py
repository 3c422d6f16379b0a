import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from parallel_ngrc.errors import ForecastDivergenceError, InvalidInputError
from parallel_ngrc.features import FeatureConfig, total_features
from parallel_ngrc.forecast import (ForecastResult, NrmseSeries, closed_loop_forecast, evaluate, nrmse,
                                    one_step_predict, prediction_horizon)
from parallel_ngrc.lorenz96 import normalize
from parallel_ngrc.ridge import INDEPENDENT, SHARED, ReadoutWeights, RidgeConfig, train


def weights(mode, L, cfg, rng, scale=0.05):
    rows = L if mode == INDEPENDENT else 1
    return ReadoutWeights(mode, scale * rng.normal(size=(rows, cfg.d_total)), cfg, 0.01, L, 0.0, 1.0)


def test_one_step_matches_feature_dot_products(rng):
    cfg = FeatureConfig()
    w = weights(INDEPENDENT, 9, cfg, rng)
    hist = rng.normal(size=(9, 3))
    out = one_step_predict(w, hist)
    for l in range(9):
        assert out[l] == pytest.approx(w.weights[l] @ total_features(hist, l, 2, cfg), rel=1e-12)


def test_zero_weights_give_zero():
    cfg = FeatureConfig(k=2, n_nn=1)
    w = ReadoutWeights(SHARED, np.zeros((1, cfg.d_total)), cfg, 0.0, 5, 0.0, 1.0)
    assert np.all(one_step_predict(w, np.ones((5, 2))) == 0)


def test_shared_uniform_history_gives_uniform_output(rng):
    cfg = FeatureConfig()
    w = weights(SHARED, 12, cfg, rng)
    hist = np.tile(rng.normal(size=3), (12, 1))
    out = one_step_predict(w, hist)
    assert np.all(out == out[0])


def test_history_shape_checked(rng):
    w = weights(SHARED, 6, FeatureConfig(), rng)
    with pytest.raises(InvalidInputError):
        one_step_predict(w, np.zeros((6, 2)))


def test_nonfinite_prediction_signalled(rng):
    cfg = FeatureConfig(k=1, n_nn=0)
    w = ReadoutWeights(SHARED, np.array([[0.0, 0.0, 1.0]]), cfg, 0.0, 4, 0.0, 1.0)
    with pytest.raises(ForecastDivergenceError):
        one_step_predict(w, np.full((4, 1), 1e200))


def test_first_closed_loop_step_is_open_loop(rng):
    for mode in (INDEPENDENT, SHARED):
        w = weights(mode, 10, FeatureConfig(), rng)
        hist = rng.normal(size=(10, 3))
        fc = closed_loop_forecast(w, hist, 1)
        assert fc.predicted[:, 0].tobytes() == one_step_predict(w, hist).tobytes()


def test_closed_loop_feeds_outputs_back(rng):
    cfg = FeatureConfig(k=2, n_nn=1)
    w = weights(INDEPENDENT, 6, cfg, rng)
    hist = rng.normal(size=(6, 2))
    fc = closed_loop_forecast(w, hist, 4)
    h = hist.copy()
    for n in range(4):
        nxt = one_step_predict(w, h)
        np.testing.assert_array_equal(fc.predicted[:, n], nxt)
        h = np.column_stack([h[:, 1:], nxt])


def test_shift_covariance_exact(rng):
    cfg = FeatureConfig()
    w = weights(SHARED, 11, cfg, rng, scale=0.02)
    hist = rng.normal(size=(11, 3))
    base = closed_loop_forecast(w, hist, 60).predicted
    for s in (1, 4, 10):
        shifted = closed_loop_forecast(w, np.roll(hist, -s, axis=0), 60).predicted
        assert np.array_equal(shifted, np.roll(base, -s, axis=0))


def test_determinism(rng):
    w = weights(INDEPENDENT, 8, FeatureConfig(), rng)
    hist = rng.normal(size=(8, 3))
    a = closed_loop_forecast(w, hist, 30).predicted
    b = closed_loop_forecast(w, hist.copy(), 30).predicted
    assert a.tobytes() == b.tobytes()


def test_divergence_truncates():
    cfg = FeatureConfig(k=1, n_nn=0)
    w = ReadoutWeights(SHARED, np.array([[0.0, 10.0, 0.0]]), cfg, 0.0, 4, 0.0, 1.0)
    fc = closed_loop_forecast(w, np.ones((4, 1)), 10)
    assert fc.truncated and fc.diverged_step == 3 and fc.predicted.shape == (4, 3)
    h = prediction_horizon(NrmseSeries(np.zeros(3), 0.01, truncated=True))
    assert h.time == pytest.approx(0.03) and not h.censored


def test_zero_steps(rng):
    fc = closed_loop_forecast(weights(SHARED, 5, FeatureConfig(k=1, n_nn=1), rng), np.zeros((5, 1)), 0)
    assert fc.predicted.shape == (5, 0) and not fc.truncated


def test_nrmse_examples(rng):
    a = rng.normal(size=(4, 7))
    assert np.all(nrmse(a, a).values == 0)
    np.testing.assert_allclose(nrmse(a, a + 1).values, 1.0, rtol=1e-15)
    np.testing.assert_allclose(nrmse(np.zeros((2, 1)), np.array([[3.0], [4.0]])).values, [np.sqrt(12.5)])
    b = rng.normal(size=(4, 7))
    assert np.array_equal(nrmse(a, b).values, nrmse(b, a).values)
    with pytest.raises(InvalidInputError):
        nrmse(a, b[:, :3])


def test_horizon_example():
    h = prediction_horizon(NrmseSeries(np.array([0.1, 0.2, 0.35, 0.5]), 0.01))
    assert h.time == pytest.approx(0.02) and h.index == 2 and not h.censored


def test_horizon_crossing_is_inclusive():
    assert prediction_horizon(NrmseSeries(np.array([0.1, 0.3]), 0.01)).index == 1


def test_horizon_censored():
    h = prediction_horizon(NrmseSeries(np.array([0.1, 0.2]), 0.01))
    assert h.censored and h.time == pytest.approx(0.02)
    assert h.in_lyapunov_times(0.01) == pytest.approx(2.0)


def test_horizon_errors():
    with pytest.raises(InvalidInputError):
        prediction_horizon(NrmseSeries(np.array([]), 0.01))
    with pytest.raises(InvalidInputError):
        prediction_horizon(NrmseSeries(np.array([0.1]), 0.01), threshold=0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 2), min_size=1, max_size=30), st.floats(0.01, 1), st.floats(0.01, 1))
def test_horizon_monotone_in_threshold(values, t1, t2):
    s = NrmseSeries(np.array(values), 0.01)
    lo, hi = sorted((t1, t2))
    assert prediction_horizon(s, lo).time <= prediction_horizon(s, hi).time


def test_forecast_result(rng):
    truth = rng.normal(size=(3, 5))
    res = ForecastResult(truth + 0.5, truth, 0.01)
    np.testing.assert_allclose(res.difference, -0.5)
    assert res.horizon().index == 0
    with pytest.raises(InvalidInputError):
        ForecastResult(truth, truth[:, :2], 0.01)


def test_trained_model_tracks_training_data(small_recording):
    # sanity on real dynamics: tight open-loop fit and a useful closed-loop run
    cfg = FeatureConfig()
    grid = normalize(small_recording.window(0, 1003))
    w = train(grid, cfg, RidgeConfig(0.1), INDEPENDENT)
    X = grid.data
    preds = np.column_stack([one_step_predict(w, X[:, m - 2:m + 1]) for m in range(2, X.shape[1] - 1)])
    assert nrmse(X[:, 3:], preds).values.mean() < 0.05
    res = evaluate(w, X[:, :203], 0.01)
    assert res.horizon().time >= 0.3
