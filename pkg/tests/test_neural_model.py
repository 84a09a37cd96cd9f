import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coevo import _kernels
from coevo.architecture import DecodedArchitecture
from coevo.errors import DegenerateDataError, EmptyDataError, ShapeError
from coevo.market_data import FeatureDataset
from coevo.neural_model import (AggregateReport, TrainConfig, WeightSet, evaluate, forward,
                                init_weights, metrics_from_counts, metrics_from_predictions,
                                predict, train)
from coevo.selftest import gradient_relative_error, random_small_architecture


def arch(features, layers):
    return DecodedArchitecture(tuple(features), tuple(layers))


def dataset(X, y):
    X = np.asarray(X, dtype=float)
    names = tuple(f"f{i}" for i in range(X.shape[1]))
    return FeatureDataset(names, X, y, np.arange(len(y)) + np.datetime64("2020-01-01", "D"))


def blobs(n=200, seed=0):
    r = np.random.default_rng(seed)
    y = np.repeat([0, 1], n // 2)
    X = r.normal(size=(n, 2)) * 0.5 + np.where(y[:, None] == 1, 2.0, -2.0)
    return dataset(X, y)


# ---- initialisation ------------------------------------------------------------------

def test_init_is_deterministic():
    a = arch(range(5), [(32, "tansig"), (0, "tansig")])
    assert init_weights(a, 7) == init_weights(a, 7)


def test_init_shapes():
    w = init_weights(arch(range(5), [(32, "tansig"), (0, "tansig")]), 0)
    assert w.shapes() == [((5, 32), (32,)), ((32, 1), (1,))]


def test_init_shapes_skip_empty_first_layer():
    w = init_weights(arch(range(3), [(0, "tansig"), (4, "logsig")]), 0)
    assert w.shapes() == [((3, 4), (4,)), ((4, 1), (1,))]


def test_different_seeds_differ():
    a = arch(range(5), [(8, "tansig"), (0, "tansig")])
    assert init_weights(a, 1) != init_weights(a, 2)


def test_glorot_limits():
    w = init_weights(arch(range(10), [(20, "tansig"), (0, "tansig")]), 3)
    assert np.all(np.abs(w.weights[0]) <= math.sqrt(6 / 30))
    assert np.all(w.biases[0] == 0)


# ---- forward pass ------------------------------------------------------------------

def test_zero_weights_give_one_half():
    a = arch(range(4), [(6, "tansig"), (3, "logsig")])
    w = init_weights(a, 0)
    zero = WeightSet([np.zeros_like(x) for x in w.weights], [np.zeros_like(b) for b in w.biases])
    assert forward(a, zero, np.ones(4)) == 0.5


def test_tansig_saturates():
    a = arch([0], [(1, "tansig"), (0, "tansig")])
    w = WeightSet([np.array([[1.0]]), np.array([[1.0]])], [np.array([0.0]), np.array([0.0])])
    # hidden output is tanh(50) and the probability is sigmoid of it
    p = forward(a, w, np.array([50.0]))
    assert math.log(p / (1 - p)) == pytest.approx(1.0, abs=1e-6)


def test_two_layer_hand_evaluation():
    a = arch([0], [(1, "logsig"), (0, "tansig")])
    w_out, b_out = 1.7, -0.3
    w = WeightSet([np.array([[1.0]]), np.array([[w_out]])], [np.array([0.0]), np.array([b_out])])
    expected = 1 / (1 + math.exp(-(w_out * 0.5 + b_out)))
    assert forward(a, w, np.array([0.0])) == pytest.approx(expected, abs=1e-15)


def test_input_width_mismatch():
    a = arch(range(3), [(2, "tansig"), (0, "tansig")])
    with pytest.raises(ShapeError):
        forward(a, init_weights(a, 0), np.ones(4))


def test_weight_shape_mismatch():
    a = arch(range(3), [(2, "tansig"), (0, "tansig")])
    other = init_weights(arch(range(3), [(5, "tansig"), (0, "tansig")]), 0)
    with pytest.raises(ShapeError):
        forward(a, other, np.ones(3))


def test_extreme_inputs_stay_finite():
    a = arch(range(2), [(3, "logsig"), (2, "tansig")])
    w = init_weights(a, 0)
    p = forward(a, w, np.array([[1e6, -1e6], [-1e6, 1e6]]))
    assert np.all(np.isfinite(p)) and np.all((p >= 0) & (p <= 1))


# ---- gradients and training ----------------------------------------------------------

def test_backprop_matches_finite_differences(rng):
    for _ in range(5):
        assert gradient_relative_error(random_small_architecture(rng), rng) < 1e-4


def test_single_class_training_set():
    a = arch(range(2), [(2, "tansig"), (0, "tansig")])
    with pytest.raises(DegenerateDataError):
        train(a, init_weights(a, 0), dataset(np.ones((4, 2)), [1, 1, 1, 1]), TrainConfig(max_epochs=2))


def test_zero_epochs_returns_initial_weights():
    a = arch(range(2), [(4, "tansig"), (0, "tansig")])
    w0 = init_weights(a, 0)
    out = train(a, w0, blobs(), TrainConfig(max_epochs=0))
    assert out == w0 and out is not w0


def test_separable_blobs_are_learned():
    ds = blobs()
    a = arch([0, 1], [(8, "tansig"), (0, "tansig")])
    w = train(a, init_weights(a, 0), ds, TrainConfig(max_epochs=200))
    assert evaluate(a, w, ds).balanced_error < 0.05
    # oracle: a linear separator also reaches this error
    from scipy.optimize import minimize
    X1 = np.column_stack([ds.X, np.ones(len(ds))])
    nll = lambda b: np.sum(np.logaddexp(0, X1 @ b) - ds.y * (X1 @ b))
    b = minimize(nll, np.zeros(3)).x
    assert metrics_from_predictions(ds.y, X1 @ b > 0).balanced_error < 0.05


def test_training_is_deterministic():
    ds = blobs(seed=4)
    a = arch([0, 1], [(5, "logsig"), (3, "tansig")])
    cfg = TrainConfig(max_epochs=20, seed=9)
    assert train(a, init_weights(a, 1), ds, cfg) == train(a, init_weights(a, 1), ds, cfg)


@pytest.mark.skipif(_kernels.compiled_run_epoch is None, reason="compiled kernel not built")
def test_backends_agree():
    r = np.random.default_rng(2)
    X = r.normal(size=(150, 6))
    ds = dataset(X, (X[:, 0] + r.normal(size=150) > 0).astype(int))
    for layers in ([(7, "tansig"), (0, "tansig")], [(5, "logsig"), (4, "tansig")], [(0, "tansig"), (3, "logsig")]):
        a = arch(range(6), layers)
        cfg = TrainConfig(max_epochs=15, batch_size=16, learning_rate=0.1, seed=5)
        wp = train(a, init_weights(a, 3), ds, cfg, backend=_kernels.python_run_epoch)
        wc = train(a, init_weights(a, 3), ds, cfg, backend=_kernels.compiled_run_epoch)
        np.testing.assert_allclose(wc.flat(), wp.flat(), rtol=0, atol=1e-10)


def test_backend_name():
    assert _kernels.BACKEND in ("cython", "python")


# ---- metrics -------------------------------------------------------------------------

def test_metrics_hand_counts():
    r = metrics_from_counts(40, 30, 20, 10)
    assert r.overall_accuracy == pytest.approx(0.70)
    assert r.balanced_accuracy == pytest.approx(0.70)
    assert r.mcc == pytest.approx(1000 / math.sqrt(60 * 50 * 50 * 40))
    assert r.mcc == pytest.approx(0.4082, abs=1e-4)


def test_perfect_predictions():
    y = np.array([0, 1, 1, 0, 1])
    r = metrics_from_predictions(y, y)
    assert r.balanced_error == 0.0 and r.mcc == 1.0


def test_majority_bias():
    y = np.array([1] * 70 + [0] * 30)
    r = metrics_from_predictions(y, np.ones(100))
    assert r.balanced_accuracy == 0.5 and r.mcc == 0.0


def test_empty_predictions():
    with pytest.raises(EmptyDataError):
        metrics_from_counts(0, 0, 0, 0)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_metric_identities(tp, tn, fp, fn):
    if tp + tn + fp + fn == 0:
        return
    r = metrics_from_counts(tp, tn, fp, fn)
    assert r.balanced_error + r.balanced_accuracy == 1.0
    assert -1.0 - 1e-12 <= r.mcc <= 1.0 + 1e-12
    assert 0.0 <= r.overall_accuracy <= 1.0


def test_predict_threshold():
    a = arch([0], [(1, "tansig"), (0, "tansig")])
    w = WeightSet([np.array([[1.0]]), np.array([[5.0]])], [np.array([0.0]), np.array([0.0])])
    assert predict(a, w, np.array([[-1.0], [1.0]])).tolist() == [0, 1]


def test_aggregate_single_cycle():
    r = metrics_from_counts(3, 2, 1, 1)
    agg = AggregateReport([r])
    d = agg.to_dict()
    assert d["cycles"] == 1 and d["mcc_mean"] == r.mcc and d["mcc_sd"] == 0.0
