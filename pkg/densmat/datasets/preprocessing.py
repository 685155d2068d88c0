"""
Scaling, PCA reduction and train/test splitting
"""

import logging
from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np
from sklearn.model_selection import train_test_split

from densmat.datasets.generators import Dataset
from densmat.estimators.eigensolver import symmetric_eigh
from densmat.exceptions import InvalidArgumentError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class MinMaxScaler:
    """
    Per-column affine map of the fitted range onto [0, 1]

    Constant columns map to 0.
    """

    mins: np.ndarray
    maxs: np.ndarray

    @property
    def spans(self) -> np.ndarray:
        spans = self.maxs - self.mins
        return np.where(spans > 0, spans, 1.0)

    def transform(self, X: np.ndarray) -> np.ndarray:
        scaled = (np.asarray(X, dtype=np.float64) - self.mins) / self.spans
        return np.where(self.maxs > self.mins, scaled, 0.0)

    def inverse(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) * self.spans + self.mins

    def to_dict(self) -> dict:
        return {"kind": "minmax", "min": self.mins.tolist(), "max": self.maxs.tolist()}


def fit_minmax(X: np.ndarray) -> MinMaxScaler:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    scaler = MinMaxScaler(mins=X.min(axis=0), maxs=X.max(axis=0))
    constant = np.flatnonzero(scaler.maxs == scaler.mins)
    if constant.size:
        logger.warning(f"Constant column(s) {constant.tolist()} scaled to 0")
    return scaler


def minmax_scale(dataset: Dataset) -> Tuple[Dataset, MinMaxScaler]:
    """
    Scale every feature column to [0, 1]; the scaler is recorded in the metadata
    """
    scaler = fit_minmax(dataset.features)
    scaled = replace(
        dataset,
        features=scaler.transform(dataset.features),
        meta=replace(dataset.meta, scaler=scaler.to_dict()),
    )
    return scaled, scaler


@dataclass(frozen=True, eq=False)
class PcaProjection:
    """
    Centering vector and top-k principal directions (rows)
    """

    mean: np.ndarray
    components: np.ndarray  # k x d
    variances: np.ndarray  # k

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) @ self.components.T

    def inverse(self, Y: np.ndarray) -> np.ndarray:
        return np.asarray(Y, dtype=np.float64) @ self.components + self.mean


def pca_reduce(dataset: Dataset, k: int) -> Tuple[Dataset, PcaProjection]:
    """
    Project onto the top-k eigenvectors of the sample covariance

    Args:
        dataset: Data to reduce
        k: Number of components, 1 <= k <= d

    Returns:
        Tuple of (reduced dataset, projection for applying to new data)
    """
    if not 1 <= k <= dataset.d:
        raise InvalidArgumentError(f"k={k} must lie in 1..{dataset.d}")
    X = dataset.features
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / max(X.shape[0] - 1, 1)
    w, u = symmetric_eigh(cov, top=k)
    projection = PcaProjection(mean=mean, components=np.ascontiguousarray(u.T), variances=np.clip(w, 0.0, None))
    reduced = replace(
        dataset,
        features=projection.transform(X),
        meta=replace(dataset.meta, columns=[f"pc{i}" for i in range(k)]),
    )
    logger.info(f"PCA {dataset.d} -> {k} dims keeps {projection.variances.sum() / max(np.trace(cov), 1e-300):.3%} of variance")
    return reduced, projection


def split(
    dataset: Dataset,
    test_fraction: float = 0.2,
    stratify: bool = False,
    seed: int = 0,
) -> Tuple[Dataset, Dataset]:
    """
    Seeded train/test split, optionally preserving class proportions

    Returns:
        Tuple of (train, test)
    """
    if not 0.0 < test_fraction < 1.0:
        raise InvalidArgumentError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    stratify_on = dataset.class_labels() if stratify else None
    index = np.arange(dataset.n)
    try:
        train_idx, test_idx = train_test_split(
            index, test_size=test_fraction, random_state=seed, shuffle=True, stratify=stratify_on
        )
    except ValueError as e:
        raise InvalidArgumentError(f"cannot split dataset: {e}") from e
    return _subset(dataset, np.sort(train_idx)), _subset(dataset, np.sort(test_idx))


def _subset(dataset: Dataset, idx: np.ndarray) -> Dataset:
    labels = None if dataset.labels is None else dataset.labels[idx]
    return replace(dataset, features=dataset.features[idx], labels=labels)
