"""
Random hyperparameter search with k-fold cross-validation

Gamma is sampled around the median heuristic 1 / (2 sigma^2), with sigma the
median inter-sample distance. Every trial is scored as a loss (lower is
better): classification error, ordinal MAE or negative held-out mean
log-likelihood.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List

import numpy as np
from pydantic import ValidationError
from sklearn.model_selection import KFold, StratifiedKFold

from densmat.config import settings
from densmat.datasets import Dataset
from densmat.estimators import dmkdc, dmkde, qmc, qmr
from densmat.exceptions import InvalidArgumentError
from densmat.models import FitParams, OptimizerConfig
from densmat.services import MODEL_KINDS, STRATEGIES, model_service

logger = logging.getLogger(__name__)

RANK_FRACTIONS = (0.1, 0.2, 0.5, 1.0)
GAMMA_DECADES = 1.0
MAX_PAIRS = 2000
QMR_MAX_RFF = 1024
QMR_BETA_MAX = 25.0


@dataclass
class Trial:
    index: int
    params: FitParams
    score: float
    fold_scores: List[float]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "index": self.index,
            "params": self.params.model_dump(),
            "score": self.score,
            "fold_scores": self.fold_scores,
        }


def median_heuristic_gamma(X: np.ndarray, seed: int = 0, max_pairs: int = MAX_PAIRS) -> float:
    """
    1 / (2 sigma^2) with sigma the median distance over up to `max_pairs` random pairs
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = X.shape[0]
    if n < 2:
        raise InvalidArgumentError("median heuristic needs at least two samples")
    rng = np.random.default_rng(seed)
    i = rng.integers(0, n, size=max_pairs)
    j = (i + rng.integers(1, n, size=max_pairs)) % n
    sigma = float(np.median(np.linalg.norm(X[i] - X[j], axis=1)))
    if sigma <= 0:
        raise InvalidArgumentError("median inter-sample distance is zero")
    return 1.0 / (2.0 * sigma ** 2)


def sample_params(
    kind: str,
    rng: np.random.Generator,
    gamma0: float,
    rff_dim: int,
    n_attributes: int,
    epochs: int,
    seed: int,
) -> FitParams:
    """
    Draw one configuration
    """
    gamma = gamma0 * 10.0 ** rng.uniform(-GAMMA_DECADES, GAMMA_DECADES)
    # (0, 1e-3]
    lr = (1.0 - rng.uniform()) * settings.learning_rate_max
    extra: Dict[str, Any] = {}
    if kind == "qmr":
        rff_dim = int(rng.integers(min(n_attributes, QMR_MAX_RFF), QMR_MAX_RFF + 1))
        extra["beta"] = float(rng.uniform(np.finfo(float).tiny, QMR_BETA_MAX))
        extra["alpha_tradeoff"] = float(rng.uniform(0.0, 1.0))
    rank = max(1, int(round(rng.choice(RANK_FRACTIONS) * rff_dim)))
    return FitParams(
        gamma=float(gamma),
        rff_dim=rff_dim,
        rank=rank,
        seed=seed,
        optimizer=OptimizerConfig(learning_rate=lr, epochs=epochs, seed=seed),
        **extra,
    )


def fold_score(kind: str, model, test: Dataset) -> float:
    if kind == "dmkde":
        return -float(np.mean(np.maximum(dmkde.log_density(model, test.features), np.log(1e-300))))
    if kind == "qmr":
        truth = test.class_labels()
        classes = qmr.nearest_class(qmr.predict(model, test.features).y_hat, int(truth.max(initial=2)))
        return qmr.mae(classes, truth)
    classify = dmkdc.classify if kind == "dmkdc" else qmc.classify
    return 1.0 - dmkdc.accuracy(classify(model, test.features), test.class_labels())


def random_search(
    kind: str,
    data: Dataset,
    strategy: str = "estimate",
    n_configs: int = 25,
    folds: int = 5,
    seed: int = 0,
    rff_dim: int = 256,
    epochs: int = 10,
) -> Dict[str, Any]:
    """
    Evaluate `n_configs` random configurations by k-fold cross-validation

    Args:
        kind: Model kind to tune
        data: Labelled dataset (labels ignored for dmkde)
        strategy: Training strategy used inside every fold
        n_configs: Number of sampled configurations
        folds: Number of CV folds
        seed: Seed of the sampler, the folds and every fit
        rff_dim: RFF dimension for non-QMR models
        epochs: Epochs per SGD fit

    Returns:
        {"best": trial, "trials": [...], "metric": name}, deterministic given seed
    """
    if kind not in MODEL_KINDS:
        raise InvalidArgumentError(f"unknown model kind '{kind}'")
    if strategy not in STRATEGIES:
        raise InvalidArgumentError(f"unknown strategy '{strategy}'")
    if n_configs < 1 or folds < 2:
        raise InvalidArgumentError("need at least one configuration and two folds")
    if data.n < folds:
        raise InvalidArgumentError(f"{data.n} samples is fewer than {folds} folds")

    rng = np.random.default_rng(seed)
    gamma0 = median_heuristic_gamma(data.features, seed)
    try:
        configs = [sample_params(kind, rng, gamma0, rff_dim, data.d, epochs, seed) for _ in range(n_configs)]
    except ValidationError as e:
        raise InvalidArgumentError(f"invalid search configuration: {e}") from e

    if kind in ("dmkdc", "qmc"):
        splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
        split_iter = list(splitter.split(data.features, data.class_labels()))
    else:
        splitter = KFold(n_splits=folds, shuffle=True, random_state=seed)
        split_iter = list(splitter.split(data.features))

    def subset(idx):
        labels = None if data.labels is None else data.labels[idx]
        return Dataset(features=data.features[idx], labels=labels, meta=data.meta)

    def run(index: int) -> Trial:
        params = configs[index]
        scores = []
        for train_idx, test_idx in split_iter:
            train, test = subset(train_idx), subset(test_idx)
            model = model_service.fit(kind, strategy, train.features, train.labels, params)
            scores.append(fold_score(kind, model, test))
        trial = Trial(index=index, params=params, score=float(np.mean(scores)), fold_scores=scores)
        logger.info(f"Search trial {index + 1}/{n_configs}: score={trial.score:.6g}")
        return trial

    with ThreadPoolExecutor(max_workers=settings.threads) as pool:
        trials = list(pool.map(run, range(n_configs)))

    best = min(trials, key=lambda t: (t.score, t.index))
    metric = {"dmkde": "neg_mean_loglik", "qmr": "mae"}.get(kind, "error_rate")
    return {"metric": metric, "best": best.to_dict(), "trials": [t.to_dict() for t in trials]}
