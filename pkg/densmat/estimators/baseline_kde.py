"""
Exact Gaussian Parzen-window estimator and the linear RFF estimator

KDE is memory-based: every query touches all N training points. It is the
correctness oracle and the timing baseline for DMKDE.
"""

import logging
import math
import platform
import time
from dataclasses import dataclass
from statistics import median
from typing import Callable, List, Sequence

import numpy as np
from scipy.special import logsumexp

from densmat.estimators import dmkde
from densmat.estimators.feature_maps import RffMap, apply_rff, build_rff
from densmat.exceptions import InvalidArgumentError
from densmat.models import TimingRecord

logger = logging.getLogger(__name__)

# query rows x training rows x d evaluated per block
BLOCK_ELEMENTS = 1 << 22


@dataclass(frozen=True, eq=False)
class KdeModel:
    train_points: np.ndarray  # N x d
    gamma: float

    @property
    def d(self) -> int:
        return int(self.train_points.shape[1])

    @property
    def norm_const(self) -> float:
        return dmkde.normalizing_constant(self.gamma, self.d)


def fit_kde(X: np.ndarray, gamma: float) -> KdeModel:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.shape[0] < 1:
        raise InvalidArgumentError("KDE needs at least one training point")
    if not gamma > 0:
        raise InvalidArgumentError(f"gamma must be positive, got {gamma}")
    return KdeModel(train_points=X, gamma=float(gamma))


def _as_queries(model: KdeModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim <= 1:
        X = X.reshape(-1, model.d)
    if X.shape[1] != model.d:
        raise InvalidArgumentError(f"query dimension {X.shape[1]} != {model.d}")
    return X


def _log_kernels(model: KdeModel, block: np.ndarray) -> np.ndarray:
    diff = block[:, None, :] - model.train_points[None, :, :]
    return -model.gamma * np.einsum("qnd,qnd->qn", diff, diff)


def _blocks(model: KdeModel, X: np.ndarray):
    rows = max(1, BLOCK_ELEMENTS // (model.train_points.shape[0] * model.d))
    for start in range(0, X.shape[0], rows):
        yield X[start:start + rows]


def kde_density(model: KdeModel, X) -> np.ndarray:
    """
    (1 / (N M_gamma)) sum_i exp(-gamma ||x_i - x||^2) for each query

    Each kernel sum is exactly rounded with math.fsum.
    """
    X = _as_queries(model, X)
    n = model.train_points.shape[0]
    sums = [math.fsum(row) for block in _blocks(model, X) for row in np.exp(_log_kernels(model, block))]
    return np.array(sums, dtype=np.float64) / (n * model.norm_const)


def kde_log_density(model: KdeModel, X) -> np.ndarray:
    """
    Log of kde_density, stable where the density underflows
    """
    X = _as_queries(model, X)
    n = model.train_points.shape[0]
    out = [logsumexp(_log_kernels(model, block), axis=1) for block in _blocks(model, X)]
    return np.concatenate(out) - np.log(n) - dmkde.log_normalizing_constant(model.gamma, model.d)


@dataclass(frozen=True, eq=False)
class RffLinearKde:
    """
    Linear RFF estimator: mean training embedding dotted with the query embedding
    """

    rff: RffMap
    phi_train: np.ndarray  # mean raw embedding, D

    @property
    def norm_const(self) -> float:
        return dmkde.normalizing_constant(self.rff.gamma, self.rff.dim_in)


def fit_rff_linear_kde(X: np.ndarray, gamma: float, D: int, seed: int) -> RffLinearKde:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    rff = build_rff(X.shape[1], D, gamma, seed)
    return RffLinearKde(rff=rff, phi_train=np.atleast_2d(apply_rff(rff, X)).mean(axis=0))


def rff_linear_kde(model: RffLinearKde, X) -> np.ndarray:
    """
    (1/M_gamma) Phi_train^T phi(x); can be negative
    """
    z = np.atleast_2d(apply_rff(model.rff, X))
    return z @ model.phi_train / model.norm_const


def time_call(fn: Callable[[], object], runs: int = 5) -> float:
    """
    Median wall time of `runs` calls after one warm-up call
    """
    fn()
    times = []
    for _ in range(runs):
        started = time.perf_counter()
        fn()
        times.append(time.perf_counter() - started)
    return median(times)


def machine_descriptor() -> str:
    return f"{platform.machine()}-{platform.system()}-{platform.python_implementation()}{platform.python_version()}"


def timing_sweep(
    Ns: Sequence[int],
    d: int,
    gamma: float,
    D: int,
    r: int,
    n_queries: int,
    seed: int = 0,
    runs: int = 5,
) -> List[TimingRecord]:
    """
    Prediction time of KDE and DMKDE as the training size grows

    Training points are standard normal draws; both estimators answer the
    same `n_queries` queries at every N.

    Returns:
        Two TimingRecords (kde, dmkde) per N, in sweep order
    """
    rng = np.random.default_rng(seed)
    queries = rng.standard_normal((n_queries, d))
    machine = machine_descriptor()
    records = []
    for n in Ns:
        X = rng.standard_normal((int(n), d))
        kde = fit_kde(X, gamma)
        model = dmkde.fit_estimation(X, gamma, D, r, seed)
        kde_seconds = time_call(lambda: kde_density(kde, queries), runs)
        dm_seconds = time_call(lambda: dmkde.density(model, queries), runs)
        logger.info(f"Timing N={n}: kde={kde_seconds:.4g}s, dmkde={dm_seconds:.4g}s")
        records.append(TimingRecord(method="kde", N=int(n), D=D, r=r, d=d,
                                    median_seconds=kde_seconds, runs=runs, machine=machine))
        records.append(TimingRecord(method="dmkde", N=int(n), D=D, r=r, d=d,
                                    median_seconds=dm_seconds, runs=runs, machine=machine))
    return records
