"""
Synthetic datasets: the 1-D Gaussian mixture and the 2-D three spirals
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from scipy.stats import norm

from densmat.exceptions import InvalidArgumentError

logger = logging.getLogger(__name__)

MIXTURE_WEIGHTS = (0.3, 0.7)
MIXTURE_MEANS = (0.0, 5.0)
MIXTURE_SD = 1.0

SPIRAL_ARMS = 3
SPIRAL_T_RANGE = (0.25, 2.5)
SPIRAL_NOISE = 0.05


@dataclass(frozen=True)
class DatasetMeta:
    """
    Provenance of a dataset and any scaling applied to it
    """

    source: str
    seed: Optional[int] = None
    columns: List[str] = field(default_factory=list)
    scaler: Optional[Dict[str, Any]] = None


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    N x d feature matrix with optional labels (class indices or real targets)
    """

    features: np.ndarray
    labels: Optional[np.ndarray]
    meta: DatasetMeta

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @property
    def d(self) -> int:
        return int(self.features.shape[1])

    def class_labels(self) -> np.ndarray:
        """
        Labels as integers 1..K

        Raises:
            InvalidArgumentError: If the dataset has no labels or they are not integral
        """
        if self.labels is None:
            raise InvalidArgumentError(f"dataset '{self.meta.source}' has no label column")
        if not np.all(np.equal(np.mod(self.labels, 1), 0)):
            raise InvalidArgumentError("labels are not integral class indices")
        return self.labels.astype(np.int64)


def _default_columns(d: int) -> List[str]:
    return [f"x{i}" for i in range(d)]


def gen_mixture_1d(n: int, seed: int) -> Dataset:
    """
    n draws from 0.3 N(0, 1) + 0.7 N(5, 1)
    """
    if n < 1:
        raise InvalidArgumentError(f"n must be positive, got {n}")
    rng = np.random.default_rng(seed)
    component = rng.choice(len(MIXTURE_WEIGHTS), size=n, p=MIXTURE_WEIGHTS)
    x = rng.normal(np.take(MIXTURE_MEANS, component), MIXTURE_SD)
    return Dataset(
        features=x.reshape(-1, 1),
        labels=None,
        meta=DatasetMeta(source="mixture1d", seed=seed, columns=_default_columns(1)),
    )


def mixture_1d_pdf(x) -> np.ndarray:
    """
    True density of the 1-D mixture
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    return sum(w * norm.pdf(x, loc=m, scale=MIXTURE_SD) for w, m in zip(MIXTURE_WEIGHTS, MIXTURE_MEANS))


def spiral_points(t: np.ndarray, arm: np.ndarray) -> np.ndarray:
    """
    Noise-free points at parameter t on arms 0..2: radius t, angle pi t + 2 pi arm / 3
    """
    angle = np.pi * t + 2.0 * np.pi * arm / SPIRAL_ARMS
    return np.column_stack([t * np.cos(angle), t * np.sin(angle)])


def gen_spirals_2d(n: int, seed: int, noise: float = SPIRAL_NOISE) -> Dataset:
    """
    Three interleaved Archimedean spirals with labels 1..3

    Point i lies on arm i mod 3, so class counts differ by at most one.

    Args:
        n: Number of points (at least 3)
        seed: Generator seed
        noise: Standard deviation of the isotropic Gaussian noise; 0 gives exact arms
    """
    if n < SPIRAL_ARMS:
        raise InvalidArgumentError(f"need at least {SPIRAL_ARMS} points, got {n}")
    if noise < 0:
        raise InvalidArgumentError(f"noise must be nonnegative, got {noise}")
    rng = np.random.default_rng(seed)
    arm = np.arange(n) % SPIRAL_ARMS
    t = rng.uniform(*SPIRAL_T_RANGE, size=n)
    points = spiral_points(t, arm)
    if noise > 0:
        points = points + rng.normal(0.0, noise, size=points.shape)
    return Dataset(
        features=points,
        labels=(arm + 1).astype(np.float64),
        meta=DatasetMeta(source="spirals", seed=seed, columns=_default_columns(2)),
    )


def uniform_box(X: np.ndarray, n: int, seed: int) -> np.ndarray:
    """
    n points drawn uniformly over the bounding box of X
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    rng = np.random.default_rng(seed)
    return rng.uniform(X.min(axis=0), X.max(axis=0), size=(n, X.shape[1]))


def grid_1d(n: int = 1000, low: float = -5.0, high: float = 10.0) -> np.ndarray:
    return np.linspace(low, high, n).reshape(-1, 1)


def grid_2d(X: np.ndarray, per_axis: int = 100) -> np.ndarray:
    """
    Regular per_axis x per_axis grid over the bounding box of 2-D data
    """
    lo, hi = X.min(axis=0), X.max(axis=0)
    gx, gy = np.meshgrid(np.linspace(lo[0], hi[0], per_axis), np.linspace(lo[1], hi[1], per_axis))
    return np.column_stack([gx.ravel(), gy.ravel()])
