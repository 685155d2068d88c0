import json

import numpy as np
import pytest

from densmat.bench import (
    convergence_study,
    evaluate,
    median_heuristic_gamma,
    random_search,
    result_json,
    rmse,
    write_records_csv,
    write_result,
)
from densmat.bench.experiments import confidence_half_width
from densmat.datasets import Dataset, DatasetMeta, gen_mixture_1d, split
from densmat.estimators import dmkdc, dmkde, qmr
from densmat.exceptions import InvalidArgumentError
from densmat.models import ConvergenceRecord


@pytest.fixture
def blob_dataset(blobs):
    X, y = blobs
    return Dataset(features=X, labels=y.astype(np.float64), meta=DatasetMeta(source="blobs"))


def test_rmse():
    assert rmse([1.0, 2.0], [1.0, 4.0]) == pytest.approx(np.sqrt(2.0))
    with pytest.raises(InvalidArgumentError):
        rmse([1.0], [1.0, 2.0])


def test_confidence_half_width():
    assert confidence_half_width(np.array([1.0])) == 0.0
    assert confidence_half_width(np.array([1.0, 1.0, 1.0])) == 0.0
    assert confidence_half_width(np.array([0.0, 2.0])) > 0.0


class TestEvaluate:
    def test_accuracy(self, blobs, blob_dataset):
        X, y = blobs
        model = dmkdc.fit_estimation(X, y, gamma=1.0, D=64, r=16, seed=0)
        metrics = evaluate("accuracy", model, data=blob_dataset)
        assert metrics == {"accuracy": 1.0, "n": 120}

    def test_task_must_match_model_kind(self, blobs, blob_dataset):
        X, y = blobs
        model = dmkdc.fit_estimation(X, y, gamma=1.0, D=16, r=4, seed=0)
        with pytest.raises(InvalidArgumentError, match="does not apply"):
            evaluate("loglik", model, data=blob_dataset)
        with pytest.raises(InvalidArgumentError, match="unknown task"):
            evaluate("auc", model, data=blob_dataset)

    def test_dataset_is_required(self, mixture_small):
        model = dmkde.fit_estimation(mixture_small.features, 8.0, D=32, r=8, seed=0)
        with pytest.raises(InvalidArgumentError):
            evaluate("loglik", model)

    def test_density_rmse_against_the_true_mixture(self):
        data = gen_mixture_1d(1000, seed=0)
        model = dmkde.fit_estimation(data.features, 8.0, D=1024, r=30, seed=0)
        metrics = evaluate("density-rmse", model)
        assert metrics["grid_points"] == 1000
        assert metrics["rmse"] < 0.05

    def test_loglik_and_loglik_compare(self, mixture_small):
        train, test = split(mixture_small, test_fraction=0.3, seed=0)
        model = dmkde.fit_estimation(train.features, 2.0, D=256, r=32, seed=0)
        loglik = evaluate("loglik", model, data=test)
        assert np.isfinite(loglik["mean_log_density"])
        compare = evaluate("loglik-compare", model, data=test, train=train)
        assert compare["n_test"] == compare["n_uniform"] == test.n
        assert all(np.isfinite(compare[k]) for k in ("rmse_test", "rmse_uniform", "rmse_both"))
        with pytest.raises(InvalidArgumentError, match="training dataset"):
            evaluate("loglik-compare", model, data=test)

    def test_mae_reports_analyses(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(0, 1, size=(200, 2))
        labels, _ = qmr.ordinal_bin(X.sum(axis=1), bins=5)
        model = qmr.fit_estimation(X, labels, gamma=8.0, D_rff=32, D_landmarks=8, beta=20.0, seed=0)
        data = Dataset(features=X, labels=labels.astype(np.float64), meta=DatasetMeta(source="ordinal"))
        metrics = evaluate("mae", model, data=data)
        assert 0.0 <= metrics["mae"] <= 4.0
        assert metrics["mae_middle_class"] > 0.0
        assert set(metrics["class_average_distributions"]) <= {"1", "2", "3", "4", "5"}
        for dist in metrics["class_average_distributions"].values():
            assert sum(dist) == pytest.approx(1.0, abs=1e-9)


class TestConvergence:
    def test_one_record_per_dimension(self):
        records = convergence_study([16, 64], seeds=3, n_train=200, rank=10)
        assert [r.D for r in records] == [16, 64]
        assert all(r.seeds == 3 for r in records)
        assert all(r.mean_rmse_truth is not None and r.mean_rmse_kde_vs_truth is not None for r in records)

    def test_error_against_kde_shrinks_with_more_features(self):
        small, large = convergence_study([8, 512], seeds=5, n_train=300, rank=30)
        assert large.mean_rmse_kde < small.mean_rmse_kde

    def test_spirals_have_no_true_density(self):
        (record,) = convergence_study([32], seeds=2, dataset="spirals", n_train=150, rank=8)
        assert record.mean_rmse_truth is None
        assert record.mean_rmse_kde_vs_truth is None

    def test_validation(self):
        with pytest.raises(InvalidArgumentError):
            convergence_study([16], seeds=0)
        with pytest.raises(InvalidArgumentError):
            convergence_study([16], seeds=1, dataset="moons")


class TestResultFiles:
    def test_records_csv(self, tmp_path):
        records = [
            ConvergenceRecord(D=8, seeds=2, mean_rmse_kde=0.5, median_rmse_kde=0.4, ci95_kde=0.1),
        ]
        path = write_records_csv(records, tmp_path / "conv.csv")
        header, row = path.read_text().splitlines()
        assert header.split(",")[:2] == ["D", "seeds"]
        assert row.startswith("8,2,,,")
        with pytest.raises(InvalidArgumentError):
            write_records_csv([], tmp_path / "empty.csv")

    def test_result_json_is_deterministic(self, tmp_path):
        text = result_json("eval", {"seed": 1, "task": "loglik"}, {"n": 3})
        assert text == result_json("eval", {"task": "loglik", "seed": 1}, {"n": 3})
        document = json.loads(text)
        assert document["schema"] == "densmat/result/v1"
        assert document["config"] == {"command": "eval", "params": {"seed": 1, "task": "loglik"}}
        path = write_result("eval", {"seed": 1, "task": "loglik"}, {"n": 3}, tmp_path / "r.json")
        assert path.read_text() == text


class TestSearch:
    def test_median_heuristic(self):
        assert median_heuristic_gamma(np.array([[0.0], [1.0]])) == pytest.approx(0.5)
        with pytest.raises(InvalidArgumentError):
            median_heuristic_gamma(np.zeros((1, 2)))

    def test_search_is_deterministic_and_picks_the_lowest_loss(self, blob_dataset):
        first = random_search("dmkdc", blob_dataset, n_configs=3, folds=3, seed=4, rff_dim=16)
        second = random_search("dmkdc", blob_dataset, n_configs=3, folds=3, seed=4, rff_dim=16)
        assert first == second
        assert first["metric"] == "error_rate"
        assert len(first["trials"]) == 3
        assert all(len(t["fold_scores"]) == 3 for t in first["trials"])
        assert first["best"]["score"] == min(t["score"] for t in first["trials"])
        assert all(t["params"]["optimizer"]["learning_rate"] <= 1e-3 for t in first["trials"])

    def test_search_validation(self, blob_dataset):
        with pytest.raises(InvalidArgumentError):
            random_search("forest", blob_dataset)
        with pytest.raises(InvalidArgumentError):
            random_search("dmkdc", blob_dataset, folds=1)
