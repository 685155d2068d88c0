import io
import json

import numpy as np
import pytest
from pydantic import ValidationError

from densmat.exceptions import InvalidArgumentError, NumericFailureError
from densmat.models import EpochRecord, OptimizerConfig
from densmat.training import (
    AdamState,
    Optimizer,
    adam_step,
    clip_by_global_norm,
    finite_diff_check,
    max_relative_error,
    minimize,
    sgd_step,
    smoothed_losses,
)


def quadratic(target=1.0):
    def batch_loss(params, idx):
        diff = params["w"] - target
        return float(len(idx) * np.sum(diff ** 2)), {"w": 2.0 * len(idx) * diff}

    return batch_loss


def test_first_adam_step_moves_by_the_learning_rate():
    params = {"w": np.array([1.0, -2.0])}
    grads = {"w": np.array([0.5, -3.0])}
    new, state = adam_step(params, grads, AdamState(), lr=0.01)
    assert state.t == 1
    assert np.allclose(new["w"], [1.0 - 0.01, -2.0 + 0.01], atol=1e-8)
    assert np.array_equal(params["w"], [1.0, -2.0])


def test_adam_rejects_non_finite_gradients():
    with pytest.raises(NumericFailureError):
        adam_step({"w": np.zeros(2)}, {"w": np.array([np.inf, 0.0])}, AdamState())


def test_sgd_step():
    new = sgd_step({"w": np.array([1.0])}, {"w": np.array([2.0])}, lr=0.1)
    assert new["w"][0] == pytest.approx(0.8)


def test_clip_by_global_norm():
    grads = {"a": np.array([12.0]), "b": np.array([16.0])}
    clipped, norm = clip_by_global_norm(grads, 10.0)
    assert norm == pytest.approx(20.0)
    assert np.allclose(clipped["a"], [6.0])
    assert np.allclose(clipped["b"], [8.0])
    unchanged, _ = clip_by_global_norm(grads, None)
    assert unchanged is grads


def test_minimize_converges_on_a_quadratic():
    config = OptimizerConfig(learning_rate=0.1, allow_large_lr=True, epochs=300, batch_size=4)
    params, history = minimize({"w": np.array([5.0])}, quadratic(), 4, config)
    assert len(history) == 300
    assert abs(params["w"][0] - 1.0) < 0.1
    assert history[-1].loss < history[0].loss


def test_minimize_writes_json_lines():
    sink = io.StringIO()
    config = OptimizerConfig(epochs=3, batch_size=2)
    minimize({"w": np.array([0.0])}, quadratic(), 4, config, log_sink=sink)
    lines = [json.loads(line) for line in sink.getvalue().splitlines()]
    assert [line["epoch"] for line in lines] == [1, 2, 3]
    assert set(lines[0]) == {"epoch", "loss", "wall_seconds"}


def test_minimize_applies_projection():
    config = OptimizerConfig(learning_rate=0.1, allow_large_lr=True, epochs=5, batch_size=4)

    def project(params):
        params["w"] = np.minimum(params["w"], 3.0)
        return params

    params, _ = minimize({"w": np.array([0.0])}, quadratic(target=10.0), 4, config, project=project)
    assert params["w"][0] <= 3.0


def test_minimize_reports_the_failing_batch():
    def exploding(params, idx):
        return float("nan"), {"w": np.zeros(1)}

    config = OptimizerConfig(epochs=1, batch_size=2)
    with pytest.raises(NumericFailureError) as info:
        minimize({"w": np.zeros(1)}, exploding, 4, config)
    assert info.value.diagnostics["batch"] == 0


def test_minimize_rejects_tiny_datasets():
    with pytest.raises(InvalidArgumentError):
        minimize({"w": np.zeros(1)}, quadratic(), 3, OptimizerConfig(batch_size=64))


def test_learning_rate_is_capped_unless_allowed():
    with pytest.raises(ValidationError):
        OptimizerConfig(learning_rate=0.01)
    assert OptimizerConfig(learning_rate=0.01, allow_large_lr=True).learning_rate == 0.01


def test_finite_diff_check_flags_a_wrong_gradient():
    def wrong(params):
        w = params["w"]
        return float(np.sum(w ** 3)), {"w": 2.0 * w}

    reports = finite_diff_check(wrong, {"w": np.array([1.0, 2.0])})
    assert all(r.flagged for r in reports)
    assert max_relative_error(reports) > 0.1

    def right(params):
        w = params["w"]
        return float(np.sum(w ** 3)), {"w": 3.0 * w ** 2}

    assert max_relative_error(finite_diff_check(right, {"w": np.array([1.0, 2.0])})) < 1e-6


def test_smoothed_losses_is_a_running_median():
    history = [EpochRecord(epoch=i + 1, loss=v, wall_seconds=0.0) for i, v in enumerate([5.0, 1.0, 3.0, 2.0])]
    assert smoothed_losses(history, window=3).tolist() == [5.0, 3.0, 3.0, 2.0]
    assert smoothed_losses([]).size == 0


def test_adam_matches_a_reference_loop_over_100_steps():
    rng = np.random.default_rng(3)
    grads = rng.normal(size=(100, 3)) * np.linspace(0.1, 5.0, 100)[:, None]
    lr, beta1, beta2, eps = 1e-3, 0.9, 0.999, 1e-8

    params, state = {"w": np.array([0.5, -1.0, 2.0])}, AdamState()
    w, m, v = params["w"].copy(), np.zeros(3), np.zeros(3)
    for t, g in enumerate(grads, start=1):
        params, state = adam_step(params, {"w": g}, state, lr=lr, beta1=beta1, beta2=beta2, epsilon=eps)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g ** 2
        w = w - lr * (m / (1 - beta1 ** t)) / (np.sqrt(v / (1 - beta2 ** t)) + eps)

    assert state.t == 100
    assert np.allclose(params["w"], w, rtol=0, atol=1e-12)


def test_optimizer_rejects_infinite_gradients_before_clipping():
    optimizer = Optimizer(OptimizerConfig(clip_norm=1.0))
    with pytest.raises(NumericFailureError) as info:
        optimizer.step({"w": np.zeros(2)}, {"w": np.array([np.inf, 1.0])})
    assert info.value.diagnostics == {"parameter": "w"}


def test_minimize_reports_the_batch_of_a_non_finite_gradient():
    calls = []

    def unstable(params, idx):
        calls.append(len(idx))
        g = np.array([np.inf]) if len(calls) == 2 else np.ones(1)
        return 1.0, {"w": g}

    config = OptimizerConfig(epochs=1, batch_size=2)
    with pytest.raises(NumericFailureError) as info:
        minimize({"w": np.zeros(1)}, unstable, 6, config)
    assert info.value.diagnostics == {"epoch": 0, "batch": 1, "parameter": "w"}
