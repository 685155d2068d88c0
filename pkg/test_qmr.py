import numpy as np
import pytest
from scipy.special import softmax

from densmat.estimators import qmc, qmr
from densmat.estimators.density_ops import FactorizedDensityMatrix
from densmat.estimators.dmkde import embed
from densmat.estimators.feature_maps import RffMap, build_rff, build_softmax_map, softmax_probabilities
from densmat.exceptions import InvalidArgumentError
from densmat.models import OptimizerConfig


@pytest.fixture
def regression_data():
    rng = np.random.default_rng(7)
    X = rng.uniform(0, 1, size=(200, 2))
    y = X.sum(axis=1) + 0.05 * rng.standard_normal(200)
    return X, y


def test_predicted_distributions_sum_to_one(regression_data):
    X, y = regression_data
    model = qmr.fit_estimation(X, y, gamma=8.0, D_rff=32, D_landmarks=8, beta=20.0, r=32, seed=0)
    pred = qmr.predict(model, X[:20])
    assert np.allclose(pred.distribution.sum(axis=1), 1.0, rtol=0, atol=1e-9)
    assert np.all(pred.variance >= 0)
    assert np.all(pred.lower <= pred.y_hat + 1e-12)
    assert np.all(pred.y_hat <= pred.upper + 1e-12)
    assert np.all(pred.lower >= model.scaler.min - 1e-12)
    assert np.all(pred.upper <= model.scaler.max + 1e-12)


def test_one_hot_output_state_has_zero_variance():
    rff = build_rff(1, 4, 1.0, seed=0)
    x0 = np.array([[0.3]])
    u = embed(rff, x0)[0]
    landmarks = build_softmax_map(5, 10.0)
    j = 3
    e_j = np.eye(5)[j]
    joint = FactorizedDensityMatrix(v=np.kron(u, e_j).reshape(1, -1), lam=np.array([1.0]))
    base = qmc.QmcModel(input_map=rff, output_map=landmarks, joint=joint, gamma=2.0, seed=0)
    model = qmr.QmrModel(base=base, alpha_tradeoff=0.1, scaler=qmr.TargetScaler(0.0, 1.0))

    pred = qmr.predict(model, x0)
    assert np.allclose(pred.distribution[0], e_j, atol=1e-12)
    assert pred.variance[0] == pytest.approx(0.0, abs=1e-12)
    assert pred.y_hat[0] == pytest.approx(landmarks.landmarks[j])


def test_expectation_of_two_point_distribution():
    y_hat, variance = qmr.expectation(np.array([[0.5, 0.5]]), np.array([0.0, 1.0]))
    assert y_hat[0] == pytest.approx(0.5)
    assert variance[0] == pytest.approx(0.25)


def test_uniform_distribution_over_five_landmarks():
    landmarks = build_softmax_map(5, 1.0).landmarks
    y_hat, variance = qmr.expectation(np.full((1, 5), 0.2), landmarks)
    assert y_hat[0] == pytest.approx(0.5, abs=1e-12)
    assert variance[0] == pytest.approx(0.125, abs=1e-12)


def test_constant_targets_predict_the_constant():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(100, 2))
    model = qmr.fit_estimation(X, np.full(100, 0.5), gamma=2.0, D_rff=16, D_landmarks=16, beta=32.0, seed=0)
    pred = qmr.predict(model, rng.normal(size=(25, 2)))
    assert np.all(np.abs(pred.y_hat - 0.5) < 0.05)


def test_single_sample_predicts_its_smoothed_target():
    X = np.array([[0.2, 0.7]])
    smooth = qmr.fit_estimation(X, [3.0], gamma=1.0, D_rff=16, D_landmarks=11, beta=20.0, seed=0,
                                scaler=qmr.TargetScaler(0.0, 10.0))
    landmarks = smooth.base.output_map.landmarks
    expected = softmax_probabilities(smooth.base.output_map, 0.3)[0] @ landmarks
    assert qmr.predict(smooth, X).y_hat_scaled[0] == pytest.approx(expected, abs=1e-9)

    sharp = qmr.fit_estimation(X, [3.0], gamma=1.0, D_rff=16, D_landmarks=11, beta=1e4, seed=0,
                               scaler=qmr.TargetScaler(0.0, 10.0))
    assert qmr.predict(sharp, X).y_hat[0] == pytest.approx(3.0, abs=1e-6)


def test_zero_tradeoff_loss_is_the_squared_error():
    rng = np.random.default_rng(9)
    d, dx, dy, r, n = 2, 5, 4, 3, 10
    X = rng.normal(size=(n, d))
    targets = rng.uniform(0, 1, size=n)
    output_map = build_softmax_map(dy, 5.0)
    params = {
        "v": rng.normal(size=(r, dx * dy)),
        "theta": rng.normal(size=r),
        "weights": rng.normal(size=(dx, d)),
        "biases": rng.uniform(0, 2 * np.pi, size=dx),
    }
    loss, _ = qmr.regression_loss_and_grad(params, X, targets, output_map.landmarks, dy, 0.0)

    base = qmc.QmcModel(
        input_map=RffMap(weights=params["weights"], biases=params["biases"], gamma=1.0, seed=0),
        output_map=output_map,
        joint=FactorizedDensityMatrix(v=params["v"], lam=softmax(params["theta"])),
        gamma=1.0,
        seed=0,
    )
    y_hat = qmc.predict_distribution(base, X).diag @ output_map.landmarks
    assert loss == pytest.approx(np.sum((targets - y_hat) ** 2), rel=1e-12, abs=1e-12)


def test_target_scaler():
    scaler = qmr.TargetScaler.fit([2.0, 4.0, 6.0])
    assert np.allclose(scaler.transform([2.0, 6.0]), [0.0, 1.0])
    assert np.allclose(scaler.inverse([0.5]), [4.0])
    constant = qmr.TargetScaler.fit([3.0, 3.0])
    assert (constant.min, constant.max) == (2.5, 3.5)
    assert np.allclose(constant.transform([3.0]), [0.5])


def test_regression_loss_gradients_include_the_input_map(check_gradients):
    rng = np.random.default_rng(4)
    d, dx, dy, r, n = 2, 4, 3, 4, 6
    X = rng.normal(size=(n, d))
    targets = rng.uniform(0, 1, size=n)
    landmarks = build_softmax_map(dy, 5.0).landmarks
    params = {
        "v": rng.normal(size=(r, dx * dy)),
        "theta": rng.normal(size=r),
        "weights": rng.normal(size=(dx, d)),
        "biases": rng.uniform(0, 2 * np.pi, size=dx),
    }
    reports = check_gradients(
        lambda p: qmr.regression_loss_and_grad(p, X, targets, landmarks, dy, 0.3), params
    )
    checked = {rep.parameter for rep in reports if abs(rep.analytic) > 1e-7}
    assert {"v", "theta", "weights", "biases"} <= checked


def test_sgd_with_zero_epochs_keeps_the_estimate(regression_data):
    X, y = regression_data
    est = qmr.fit_estimation(X, y, gamma=8.0, D_rff=16, D_landmarks=6, beta=20.0, r=24, seed=1)
    sgd = qmr.fit_sgd(X, y, gamma=8.0, D_rff=16, D_landmarks=6, beta=20.0, r=24, seed=1,
                      optimizer=OptimizerConfig(epochs=0))
    assert sgd.base.trained_by == "sgd"
    assert np.array_equal(sgd.base.joint.v, est.base.joint.v)
    assert np.array_equal(sgd.base.input_map.weights, est.base.input_map.weights)
    assert sgd.base.output_map.beta == est.base.output_map.beta


def test_sgd_wraps_biases_and_keeps_beta(regression_data):
    X, y = regression_data
    model = qmr.fit_sgd(X, y, gamma=8.0, D_rff=16, D_landmarks=6, beta=20.0, r=24, seed=1,
                        optimizer=OptimizerConfig(epochs=2, batch_size=25))
    assert model.base.output_map.beta == 20.0
    assert model.base.input_map.biases.min() >= 0.0
    assert model.base.input_map.biases.max() < 2 * np.pi


def test_alpha_tradeoff_range(regression_data):
    X, y = regression_data
    with pytest.raises(InvalidArgumentError):
        qmr.fit_estimation(X, y, gamma=1.0, D_rff=8, D_landmarks=4, beta=1.0, alpha_tradeoff=1.0)


def test_nearest_class_rounds_ties_down_and_clips():
    assert qmr.nearest_class([0.4, 1.5, 2.5, 3.6, 9.0], 5).tolist() == [1, 1, 2, 4, 5]


def test_mae():
    assert qmr.mae([1, 2, 3], [1, 3, 5]) == pytest.approx(1.0)
    with pytest.raises(InvalidArgumentError):
        qmr.mae([1], [1, 2])


def test_ordinal_bins_are_equal_width():
    labels, edges = qmr.ordinal_bin(np.linspace(0.0, 10.0, 11), bins=5)
    assert np.allclose(edges, [0, 2, 4, 6, 8, 10])
    assert labels.tolist() == [1, 1, 2, 2, 3, 3, 4, 4, 5, 5, 5]
    assert qmr.assign_bins([-1.0, 11.0], edges).tolist() == [1, 5]


def test_distribution_and_variance_analyses():
    dist = np.array([[0.8, 0.2], [0.6, 0.4], [0.1, 0.9]])
    averages = qmr.class_average_distributions(dist, [1, 1, 2])
    assert np.allclose(averages[1], [0.7, 0.3])
    assert np.allclose(averages[2], [0.1, 0.9])

    stats = qmr.error_group_variance([1, 2, 3, 1], [1, 1, 1, 1], [0.1, 0.2, 0.4, 0.3])
    assert stats[0]["count"] == 2
    assert stats[0]["mean"] == pytest.approx(0.2)
    assert stats[2]["median"] == pytest.approx(0.4)


def test_predict_class_is_in_range(regression_data):
    X, y = regression_data
    labels, _ = qmr.ordinal_bin(y, bins=5)
    model = qmr.fit_estimation(X, labels, gamma=8.0, D_rff=32, D_landmarks=8, beta=20.0, seed=0)
    classes = qmr.predict_class(model, X, 5)
    assert classes.min() >= 1 and classes.max() <= 5


@pytest.mark.slow
def test_sgd_beats_estimation_and_the_middle_class_on_ordinal_task():
    rng = np.random.default_rng(21)
    X = rng.uniform(0, 1, size=(1500, 2))
    labels, edges = qmr.ordinal_bin(X.sum(axis=1) + 0.05 * rng.standard_normal(1500), bins=5)
    X_train, X_test = X[:1000], X[1000:]
    y_train, y_test = labels[:1000], labels[1000:]

    est = qmr.fit_estimation(X_train, y_train, gamma=4.0, D_rff=128, D_landmarks=16, beta=32.0, r=64, seed=0)
    config = OptimizerConfig(epochs=30, batch_size=32, learning_rate=1e-3)
    sgd = qmr.fit_sgd(X_train, y_train, gamma=4.0, D_rff=128, D_landmarks=16, beta=32.0, r=64, seed=0,
                      optimizer=config, init=est)

    est_mae = qmr.mae(qmr.predict_class(est, X_test, 5), y_test)
    sgd_mae = qmr.mae(qmr.predict_class(sgd, X_test, 5), y_test)
    middle_mae = qmr.mae(np.full_like(y_test, 3), y_test)
    assert sgd_mae < est_mae
    assert sgd_mae < middle_mae
