"""
Experiment harness: evaluation metrics, density convergence study and result files

Every result is written together with the configuration that produced it and
without timestamps, so reruns with the same seed are byte-identical.
"""

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel
from scipy.stats import t as student_t

from densmat.config import settings
from densmat.datasets import Dataset, gen_mixture_1d, gen_spirals_2d, grid_1d, grid_2d, mixture_1d_pdf, uniform_box
from densmat.estimators import baseline_kde, dmkdc, dmkde, qmc, qmr
from densmat.exceptions import DataError, InvalidArgumentError
from densmat.models import ConvergenceRecord, ExperimentConfig, ResultEnvelope
from densmat.storage.model_store import Model, model_kind

logger = logging.getLogger(__name__)

EVAL_TASKS = ("density-rmse", "accuracy", "mae", "loglik", "loglik-compare")

# defaults of the two density-convergence settings
CONVERGENCE_DEFAULTS = {
    "mixture1d": {"gamma": 8.0, "rank": 30, "n_train": 1000},
    "spirals": {"gamma": 128.0, "rank": 100, "n_train": 1000},
}


def rmse(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise InvalidArgumentError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def _require(model: Model, kinds: Sequence[str], task: str) -> str:
    kind = model_kind(model)
    if kind not in kinds:
        raise InvalidArgumentError(f"task '{task}' does not apply to a {kind} model")
    return kind


def eval_density_rmse(model: Model, grid: Optional[np.ndarray] = None) -> Dict[str, Any]:
    """
    RMSE of DMKDE densities against the true 1-D mixture pdf on a grid
    """
    _require(model, ("dmkde",), "density-rmse")
    if model.d != 1:
        raise InvalidArgumentError("density-rmse compares against the 1-D mixture and needs d = 1")
    grid = grid_1d() if grid is None else grid
    predicted = dmkde.density(model, grid)
    return {"rmse": rmse(predicted, mixture_1d_pdf(grid)), "grid_points": int(grid.shape[0])}


def eval_accuracy(model: Model, data: Dataset) -> Dict[str, Any]:
    kind = _require(model, ("dmkdc", "qmc"), "accuracy")
    truth = data.class_labels()
    predicted = dmkdc.classify(model, data.features) if kind == "dmkdc" else qmc.classify(model, data.features)
    return {"accuracy": dmkdc.accuracy(predicted, truth), "n": data.n}


def eval_mae(model: Model, data: Dataset, n_classes: Optional[int] = None) -> Dict[str, Any]:
    """
    Ordinal MAE of a QMR model plus its distribution and variance analyses

    Labels are ordinal classes 1..K; predictions map to the nearest class.
    """
    _require(model, ("qmr",), "mae")
    truth = data.class_labels()
    K = n_classes or int(truth.max())
    pred = qmr.predict(model, data.features)
    classes = qmr.nearest_class(pred.y_hat, K)
    middle = np.full_like(truth, (K + 1) // 2)
    return {
        "mae": qmr.mae(classes, truth),
        "mae_middle_class": qmr.mae(middle, truth),
        "n": data.n,
        "class_average_distributions": {
            str(c): dist.tolist() for c, dist in qmr.class_average_distributions(pred.distribution, truth).items()
        },
        "error_group_variance": {
            str(err): stats for err, stats in qmr.error_group_variance(classes, truth, pred.variance_scaled).items()
        },
    }


def eval_loglik(model: Model, data: Dataset) -> Dict[str, Any]:
    _require(model, ("dmkde",), "loglik")
    logs = dmkde.log_density(model, data.features)
    return {"mean_log_density": float(np.mean(np.maximum(logs, np.log(1e-300)))), "n": data.n}


def eval_loglik_compare(
    model: Model,
    train: Dataset,
    test: Dataset,
    n_uniform: Optional[int] = None,
    seed: int = 0,
) -> Dict[str, Any]:
    """
    RMSE between DMKDE and exact-KDE log densities on test points and on uniform box points
    """
    _require(model, ("dmkde",), "loglik-compare")
    kde = baseline_kde.fit_kde(train.features, model.gamma)
    uniform = uniform_box(test.features, n_uniform or test.n, seed)

    def log_pair(X):
        return dmkde.log_density(model, X), baseline_kde.kde_log_density(kde, X)

    floor = np.log(1e-300)
    dm_test, kde_test = (np.maximum(v, floor) for v in log_pair(test.features))
    dm_uni, kde_uni = (np.maximum(v, floor) for v in log_pair(uniform))
    return {
        "rmse_test": rmse(dm_test, kde_test),
        "rmse_uniform": rmse(dm_uni, kde_uni),
        "rmse_both": rmse(np.concatenate([dm_test, dm_uni]), np.concatenate([kde_test, kde_uni])),
        "n_test": test.n,
        "n_uniform": int(uniform.shape[0]),
    }


def evaluate(
    task: str,
    model: Model,
    data: Optional[Dataset] = None,
    train: Optional[Dataset] = None,
    seed: int = 0,
) -> Dict[str, Any]:
    """
    Dispatch one evaluation task
    """
    if task not in EVAL_TASKS:
        raise InvalidArgumentError(f"unknown task '{task}'; expected one of {', '.join(EVAL_TASKS)}")
    if task == "density-rmse":
        return eval_density_rmse(model)
    if data is None:
        raise InvalidArgumentError(f"task '{task}' needs a dataset")
    if task == "accuracy":
        return eval_accuracy(model, data)
    if task == "mae":
        return eval_mae(model, data)
    if task == "loglik":
        return eval_loglik(model, data)
    if train is None:
        raise InvalidArgumentError("task 'loglik-compare' needs the training dataset")
    return eval_loglik_compare(model, train, data, seed=seed)


def confidence_half_width(values: np.ndarray, level: float = 0.95) -> float:
    """
    Half-width of the Student-t confidence interval of the mean
    """
    n = len(values)
    if n < 2:
        return 0.0
    return float(student_t.ppf(0.5 + level / 2.0, n - 1) * np.std(values, ddof=1) / np.sqrt(n))


def convergence_study(
    D_list: Sequence[int],
    seeds: int,
    dataset: str = "mixture1d",
    gamma: Optional[float] = None,
    rank: Optional[int] = None,
    n_train: Optional[int] = None,
    data_seed: int = 0,
    embedding: str = "normalized",
) -> List[ConvergenceRecord]:
    """
    DMKDE accuracy as the number of random features grows

    The training sample is fixed by `data_seed`; repetitions redraw only the
    RFF map (seeds 0..seeds-1). Each D is compared against the exact KDE with
    the same gamma and, for the 1-D mixture, against the true pdf.

    Returns:
        One ConvergenceRecord per D
    """
    if dataset not in CONVERGENCE_DEFAULTS:
        raise InvalidArgumentError(f"unknown dataset '{dataset}'")
    if seeds < 1 or not D_list:
        raise InvalidArgumentError("need at least one D and one seed")
    defaults = CONVERGENCE_DEFAULTS[dataset]
    gamma = gamma or defaults["gamma"]
    rank = rank or defaults["rank"]
    n_train = n_train or defaults["n_train"]

    if dataset == "mixture1d":
        X = gen_mixture_1d(n_train, data_seed).features
        grid = grid_1d()
        truth = mixture_1d_pdf(grid)
    else:
        X = gen_spirals_2d(n_train, data_seed).features
        grid = grid_2d(X)
        truth = None

    kde = baseline_kde.fit_kde(X, gamma)
    kde_grid = baseline_kde.kde_density(kde, grid)
    kde_vs_truth = rmse(kde_grid, truth) if truth is not None else None

    records = []
    for D in D_list:
        r = min(rank, D)

        def run(seed: int):
            model = dmkde.fit_estimation(X, gamma, D, r, seed, embedding=embedding)
            predicted = dmkde.density(model, grid)
            return rmse(predicted, kde_grid), (rmse(predicted, truth) if truth is not None else None)

        with ThreadPoolExecutor(max_workers=settings.threads) as pool:
            results = list(pool.map(run, range(seeds)))

        vs_kde = np.array([res[0] for res in results])
        record = ConvergenceRecord(
            D=D,
            seeds=seeds,
            mean_rmse_kde=float(vs_kde.mean()),
            median_rmse_kde=float(np.median(vs_kde)),
            ci95_kde=confidence_half_width(vs_kde),
            mean_rmse_kde_vs_truth=kde_vs_truth,
        )
        if truth is not None:
            vs_truth = np.array([res[1] for res in results])
            record.mean_rmse_truth = float(vs_truth.mean())
            record.ci95_truth = confidence_half_width(vs_truth)
        logger.info(f"Convergence D={D}: median RMSE vs KDE {record.median_rmse_kde:.4g}")
        records.append(record)
    return records


def write_records_csv(records: Sequence[BaseModel], path: Union[str, Path]) -> Path:
    """
    One CSV row per pydantic record, columns in field order
    """
    path = Path(path)
    if not records:
        raise InvalidArgumentError("no records to write")
    fields = list(type(records[0]).model_fields)
    try:
        with path.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=fields, lineterminator="\n")
            writer.writeheader()
            for record in records:
                writer.writerow({k: "" if v is None else v for k, v in record.model_dump().items()})
    except OSError as e:
        logger.error(f"Cannot write results {path}: {e}")
        raise DataError(f"cannot write '{path}': {e.strerror or e}") from e
    return path


def result_json(command: str, params: Dict[str, Any], metrics: Dict[str, Any]) -> str:
    envelope = ResultEnvelope(config=ExperimentConfig(command=command, params=params), metrics=metrics)
    return json.dumps(envelope.model_dump(by_alias=True), indent=2, sort_keys=True) + "\n"


def write_result(command: str, params: Dict[str, Any], metrics: Dict[str, Any], path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        path.write_text(result_json(command, params, metrics), encoding="utf-8")
    except OSError as e:
        logger.error(f"Cannot write results {path}: {e}")
        raise DataError(f"cannot write '{path}': {e.strerror or e}") from e
    return path
