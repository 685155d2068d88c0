"""
Feature maps that lift raw inputs and outputs into unit-norm vectors

Random Fourier features (raw and normalized), one-hot encoding and the
landmark-softmax map used for continuous targets.
"""

import logging
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.special import softmax

from densmat.exceptions import DegenerateEmbeddingError, InvalidArgumentError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True, eq=False)
class RffMap:
    """
    Frozen random projection z = sqrt(2/D) cos(W x + b)

    `gamma` is the spread of the Gaussian kernel exp(-gamma ||x - y||^2) that
    the inner products of this map approximate. Weights are drawn with
    per-coordinate variance 2 * gamma.
    """

    weights: np.ndarray  # D x d
    biases: np.ndarray  # D, radians in [0, 2pi)
    gamma: float
    seed: int

    @property
    def dim_in(self) -> int:
        return int(self.weights.shape[1])

    @property
    def dim_out(self) -> int:
        return int(self.weights.shape[0])


class ClampCounter:
    """
    Thread-safe tally of out-of-range inputs clamped by a SoftmaxMap
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0

    def add(self, n: int) -> None:
        with self._lock:
            self._count += n

    @property
    def count(self) -> int:
        with self._lock:
            return self._count


@dataclass(frozen=True, eq=False)
class SoftmaxMap:
    """
    Landmark-softmax encoding of a value in [0, 1]

    Output i is sqrt(p_i(y)) with p = softmax(-beta (y - alpha_i)^2) over
    equally spaced landmarks alpha_i = (i - 1) / (D - 1).
    """

    landmarks: np.ndarray
    beta: float
    clamped: ClampCounter = field(default_factory=ClampCounter, repr=False)

    @property
    def dim(self) -> int:
        return int(self.landmarks.shape[0])


@dataclass(frozen=True)
class OneHotMap:
    """
    One-hot encoding of categories 1..K
    """

    n_classes: int

    @property
    def dim(self) -> int:
        return self.n_classes


def build_rff(d: int, D: int, gamma_kernel: float, seed: int) -> RffMap:
    """
    Sample an RFF map approximating exp(-gamma_kernel ||x - y||^2)

    Args:
        d: Input dimension
        D: Number of random features
        gamma_kernel: Spread of the approximated Gaussian kernel
        seed: Seed of the PCG64 generator the draws come from

    Returns:
        RffMap, bit-identical for identical arguments
    """
    if d < 1 or D < 1:
        raise InvalidArgumentError(f"RFF dimensions must be positive, got d={d}, D={D}")
    if not np.isfinite(gamma_kernel) or gamma_kernel <= 0:
        raise InvalidArgumentError(f"gamma must be positive, got {gamma_kernel}")

    rng = np.random.default_rng(seed)
    weights = rng.normal(loc=0.0, scale=np.sqrt(2.0 * gamma_kernel), size=(D, d))
    biases = rng.uniform(low=0.0, high=TWO_PI, size=D)
    logger.debug(f"Built RFF map d={d}, D={D}, gamma={gamma_kernel}, seed={seed}")
    return RffMap(weights=weights, biases=biases, gamma=float(gamma_kernel), seed=int(seed))


def _is_single(x, dim: int) -> bool:
    # a scalar, or a 1-D vector of exactly `dim` entries, is one point
    return np.ndim(x) == 0 or (np.ndim(x) == 1 and np.shape(x)[0] == dim)


def _as_batch(x: np.ndarray, dim: int, name: str = "input") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(1, -1) if dim != 1 or x.shape[0] == 1 else x.reshape(-1, 1)
    if x.ndim != 2 or x.shape[1] != dim:
        raise InvalidArgumentError(f"{name} has shape {np.shape(x)}, expected (*, {dim})")
    return x


def apply_rff(rff: RffMap, x: np.ndarray) -> np.ndarray:
    """
    Raw RFF embedding sqrt(2/D) cos(W x + b)

    A 1-D `x` of length d gives a vector of length D; an N x d batch gives N x D.
    """
    single = _is_single(x, rff.dim_in)
    batch = _as_batch(x, rff.dim_in)
    z = np.sqrt(2.0 / rff.dim_out) * np.cos(batch @ rff.weights.T + rff.biases)
    return z[0] if single else z


def apply_rff_normalized(rff: RffMap, x: np.ndarray) -> np.ndarray:
    """
    RFF embedding scaled to unit norm

    Raises:
        DegenerateEmbeddingError: If a raw embedding is the zero vector
    """
    single = _is_single(x, rff.dim_in)
    z = np.atleast_2d(apply_rff(rff, x))
    norms = np.linalg.norm(z, axis=1)
    bad = np.flatnonzero(norms == 0.0)
    if bad.size:
        raise DegenerateEmbeddingError(
            "raw RFF embedding has zero norm",
            {"row": int(bad[0]), "seed": rff.seed},
        )
    z = z / norms[:, None]
    return z[0] if single else z


def one_hot(i, K: int) -> np.ndarray:
    """
    Unit vector E_i for category i in 1..K (scalar or array of categories)
    """
    if K < 1:
        raise InvalidArgumentError(f"cardinality must be positive, got {K}")
    labels = np.asarray(i)
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(np.equal(np.mod(labels, 1), 0)):
            raise InvalidArgumentError("categories must be integers")
        labels = labels.astype(np.int64)
    if np.any(labels < 1) or np.any(labels > K):
        raise InvalidArgumentError(f"category out of range 1..{K}: {labels.min()}..{labels.max()}")
    return np.eye(K)[labels - 1]


def build_softmax_map(D: int, beta: float) -> SoftmaxMap:
    """
    Landmark-softmax map with D equally spaced landmarks in [0, 1]
    """
    if D < 2:
        raise InvalidArgumentError(f"softmax map needs at least 2 landmarks, got {D}")
    if not np.isfinite(beta) or beta <= 0:
        raise InvalidArgumentError(f"beta must be positive, got {beta}")
    landmarks = np.arange(D, dtype=np.float64) / (D - 1)
    return SoftmaxMap(landmarks=landmarks, beta=float(beta))


def softmax_probabilities(sm: SoftmaxMap, y) -> np.ndarray:
    """
    p_i(y) for each landmark; out-of-range y is clamped to [0, 1]
    """
    values = np.atleast_1d(np.asarray(y, dtype=np.float64))
    outside = int(np.count_nonzero((values < 0.0) | (values > 1.0)))
    if outside:
        sm.clamped.add(outside)
        logger.warning(f"Clamped {outside} target value(s) outside [0, 1]")
        values = np.clip(values, 0.0, 1.0)
    logits = -sm.beta * (values[:, None] - sm.landmarks[None, :]) ** 2
    return softmax(logits, axis=1)


def apply_softmax_map(sm: SoftmaxMap, y) -> np.ndarray:
    """
    sqrt of the landmark-softmax weights; unit norm for every y
    """
    out = np.sqrt(softmax_probabilities(sm, y))
    return out[0] if np.ndim(y) == 0 else out


def apply_output_map(output_map, y) -> np.ndarray:
    """
    Embed a batch of outputs with either a OneHotMap or a SoftmaxMap
    """
    if isinstance(output_map, OneHotMap):
        return one_hot(np.asarray(y), output_map.n_classes)
    if isinstance(output_map, SoftmaxMap):
        return np.sqrt(softmax_probabilities(output_map, y))
    raise InvalidArgumentError(f"unsupported output map {type(output_map).__name__}")
