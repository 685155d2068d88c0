"""
Quantum measurement regression (QMR) for ordinal and metric targets

QMC with a landmark-softmax output map. The prediction is the expected
landmark under the collapsed output state, and its spread around that
expectation is reported as the prediction variance.
"""

import logging
import time
from dataclasses import dataclass
from typing import Dict, Optional, TextIO, Tuple

import numpy as np
from scipy.special import softmax
from scipy.stats import norm

from densmat.estimators import qmc
from densmat.estimators.density_ops import MIN_EVIDENCE, FactorizedDensityMatrix
from densmat.estimators.feature_maps import RffMap, SoftmaxMap, build_softmax_map
from densmat.exceptions import InvalidArgumentError
from densmat.models import OptimizerConfig
from densmat.training import minimize

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class TargetScaler:
    """
    Affine map of the training target range onto [0, 1]
    """

    min: float
    max: float

    @classmethod
    def fit(cls, y) -> "TargetScaler":
        y = np.asarray(y, dtype=np.float64)
        lo, hi = float(np.min(y)), float(np.max(y))
        if hi == lo:
            # constant targets: a unit-width window centred on the value
            logger.warning(f"Constant regression targets ({lo}); using the range [{lo - 0.5}, {lo + 0.5}]")
            return cls(min=lo - 0.5, max=lo + 0.5)
        return cls(min=lo, max=hi)

    @property
    def width(self) -> float:
        return self.max - self.min

    def transform(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=np.float64) - self.min) / self.width

    def inverse(self, y_scaled) -> np.ndarray:
        return np.asarray(y_scaled, dtype=np.float64) * self.width + self.min


@dataclass(frozen=True, eq=False)
class QmrModel:
    """
    QMC model with a softmax output map, loss trade-off and target scaler
    """

    base: qmc.QmcModel
    alpha_tradeoff: float
    scaler: TargetScaler

    @property
    def landmarks(self) -> np.ndarray:
        return self.base.output_map.landmarks


@dataclass(frozen=True, eq=False)
class QmrPrediction:
    """
    Per-point regression output in original target units
    """

    y_hat: np.ndarray
    variance: np.ndarray
    distribution: np.ndarray  # n x D landmark probabilities
    lower: np.ndarray
    upper: np.ndarray
    y_hat_scaled: np.ndarray
    variance_scaled: np.ndarray


def expectation(distribution: np.ndarray, landmarks: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Mean and variance of the landmark values under each row's distribution
    """
    p = np.atleast_2d(distribution)
    y_hat = p @ landmarks
    variance = np.einsum("nb,nb->n", p, (y_hat[:, None] - landmarks[None, :]) ** 2)
    return y_hat, np.maximum(variance, 0.0)


def predict(model: QmrModel, X: np.ndarray, confidence: float = 0.95) -> QmrPrediction:
    """
    Expected target, variance and a normal-approximation interval per point

    Args:
        model: Trained regressor
        X: Query points
        confidence: Coverage of the interval, clipped to the training range

    Returns:
        QmrPrediction in original target units
    """
    if not 0.0 < confidence < 1.0:
        raise InvalidArgumentError(f"confidence must lie in (0, 1), got {confidence}")
    dist = qmc.predict_distribution(model.base, X).diag
    y_scaled, var_scaled = expectation(dist, model.landmarks)
    half = norm.ppf(0.5 + confidence / 2.0) * np.sqrt(var_scaled)
    lower = np.clip(y_scaled - half, 0.0, 1.0)
    upper = np.clip(y_scaled + half, 0.0, 1.0)
    return QmrPrediction(
        y_hat=model.scaler.inverse(y_scaled),
        variance=var_scaled * model.scaler.width ** 2,
        distribution=dist,
        lower=model.scaler.inverse(lower),
        upper=model.scaler.inverse(upper),
        y_hat_scaled=y_scaled,
        variance_scaled=var_scaled,
    )


def fit_estimation(
    X: np.ndarray,
    y,
    gamma: float,
    D_rff: int,
    D_landmarks: int,
    beta: float,
    r: Optional[int] = None,
    seed: int = 0,
    alpha_tradeoff: float = 0.1,
    scaler: Optional[TargetScaler] = None,
) -> QmrModel:
    """
    Estimation training through QMC on softmax-embedded scaled targets
    """
    _check_tradeoff(alpha_tradeoff)
    scaler = scaler or TargetScaler.fit(y)
    output_map = build_softmax_map(D_landmarks, beta)
    base = qmc.fit_estimation(X, scaler.transform(y), gamma, D_rff, output_map, r=r, seed=seed)
    return QmrModel(base=base, alpha_tradeoff=float(alpha_tradeoff), scaler=scaler)


def _check_tradeoff(alpha_tradeoff: float) -> None:
    if not 0.0 <= alpha_tradeoff < 1.0:
        raise InvalidArgumentError(f"alpha_tradeoff must lie in [0, 1), got {alpha_tradeoff}")


def regression_loss_and_grad(
    params: dict,
    X: np.ndarray,
    targets: np.ndarray,
    landmarks: np.ndarray,
    dy: int,
    alpha_tradeoff: float,
) -> Tuple[float, dict]:
    """
    Summed squared error plus alpha times the prediction variance

    The input map is part of the graph: affine -> cos -> normalize ->
    collapse -> expectation.

    Args:
        params: {"v", "theta", "weights" (Dx x d), "biases" (Dx)}
        X: B x d inputs
        targets: B scaled targets in [0, 1]
        landmarks: Dy landmark values
        dy: Number of landmarks
        alpha_tradeoff: Weight of the variance term

    Returns:
        Tuple of (loss, gradients for every parameter)
    """
    v, weights, biases = params["v"], params["weights"], params["biases"]
    lam = softmax(params["theta"])
    dx = weights.shape[0]

    u = X @ weights.T + biases
    scale = np.sqrt(2.0 / dx)
    raw = scale * np.cos(u)
    norms = np.linalg.norm(raw, axis=1)
    zx = raw / norms[:, None]

    a, q = qmc._collapse_terms(v, lam, zx, dx, dy)
    evidence = np.maximum(q.sum(axis=1), MIN_EVIDENCE)
    p = q / evidence[:, None]
    y_hat = p @ landmarks
    spread = (y_hat[:, None] - landmarks[None, :]) ** 2
    variance = np.einsum("nb,nb->n", p, spread)
    residual = targets - y_hat
    loss = float(np.sum(residual ** 2) + alpha_tradeoff * np.sum(variance))

    # d loss / d p, using variance = sum p alpha^2 - y_hat^2
    g_p = (-2.0 * residual - 2.0 * alpha_tradeoff * y_hat)[:, None] * landmarks[None, :] \
        + alpha_tradeoff * landmarks[None, :] ** 2
    g_q = (g_p - np.einsum("nb,nb->n", g_p, p)[:, None]) / evidence[:, None]

    grad_v, grad_theta = qmc._joint_grads(g_q, a, zx, lam)

    v3 = v.reshape(v.shape[0], dx, dy)
    g_z = 2.0 * np.einsum("nrb,r,rab,nb->na", a, lam, v3, g_q)
    g_raw = (g_z - zx * np.einsum("na,na->n", zx, g_z)[:, None]) / norms[:, None]
    g_u = -scale * np.sin(u) * g_raw

    return loss, {
        "v": grad_v,
        "theta": grad_theta,
        "weights": g_u.T @ X,
        "biases": g_u.sum(axis=0),
    }


def _project(params: dict) -> dict:
    params["biases"] = np.mod(params["biases"], TWO_PI)
    return params


def fit_sgd(
    X: np.ndarray,
    y,
    gamma: float,
    D_rff: int,
    D_landmarks: int,
    beta: float,
    r: Optional[int] = None,
    seed: int = 0,
    alpha_tradeoff: float = 0.1,
    optimizer: Optional[OptimizerConfig] = None,
    log_sink: Optional[TextIO] = None,
    init: Optional[QmrModel] = None,
    scaler: Optional[TargetScaler] = None,
) -> QmrModel:
    """
    QMR-SGD: Adam over the joint factorization and the RFF weights and biases

    Warm-starts from estimation unless `init` is supplied. Biases are wrapped
    into [0, 2pi) after every step. Beta only shapes the target embeddings of
    the estimation warm start, so it is carried over unchanged.

    Returns:
        QmrModel whose base has trained_by="sgd"
    """
    _check_tradeoff(alpha_tradeoff)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    optimizer = optimizer or OptimizerConfig()
    if init is None:
        init = fit_estimation(X, y, gamma, D_rff, D_landmarks, beta, r=r, seed=seed,
                              alpha_tradeoff=alpha_tradeoff, scaler=scaler)
    base = init.base
    params = {
        "v": base.joint.v,
        "theta": np.log(np.maximum(base.joint.lam, 1e-12)),
        "weights": base.input_map.weights,
        "biases": base.input_map.biases,
    }

    if optimizer.epochs > 0:
        targets = np.clip(init.scaler.transform(np.asarray(y).ravel()), 0.0, 1.0)
        landmarks = base.output_map.landmarks
        dy = base.dy

        def batch_loss(p, idx):
            return regression_loss_and_grad(p, X[idx], targets[idx], landmarks, dy, alpha_tradeoff)

        started = time.perf_counter()
        params, history = minimize(params, batch_loss, X.shape[0], optimizer, project=_project, log_sink=log_sink)
        logger.info(
            f"QMR-SGD: {optimizer.epochs} epochs, final loss {history[-1].loss:.6g} "
            f"in {time.perf_counter() - started:.3f}s"
        )

    input_map = RffMap(
        weights=np.array(params["weights"], copy=True),
        biases=np.array(params["biases"], copy=True),
        gamma=base.input_map.gamma,
        seed=base.input_map.seed,
    )
    output_map = SoftmaxMap(landmarks=base.output_map.landmarks.copy(), beta=base.output_map.beta)
    trained = qmc.QmcModel(
        input_map=input_map,
        output_map=output_map,
        joint=FactorizedDensityMatrix(v=np.array(params["v"], copy=True), lam=softmax(params["theta"])),
        gamma=base.gamma,
        seed=base.seed,
        trained_by="sgd",
    )
    return QmrModel(base=trained, alpha_tradeoff=float(alpha_tradeoff), scaler=init.scaler)


def predict_class(model: QmrModel, X: np.ndarray, n_classes: int) -> np.ndarray:
    """
    Ordinal class 1..K nearest to the prediction in label units; ties go to the lower class
    """
    return nearest_class(predict(model, X).y_hat, n_classes)


def nearest_class(y_hat, n_classes: int) -> np.ndarray:
    if n_classes < 2:
        raise InvalidArgumentError(f"need at least 2 ordinal classes, got {n_classes}")
    nearest = np.ceil(np.asarray(y_hat, dtype=np.float64) - 0.5)
    return np.clip(nearest, 1, n_classes).astype(np.int64)


def mae(predictions, truth) -> float:
    """
    Mean absolute error between integer class labels
    """
    predictions = np.asarray(predictions).ravel()
    truth = np.asarray(truth).ravel()
    if predictions.shape != truth.shape:
        raise InvalidArgumentError(f"length mismatch: {predictions.shape[0]} vs {truth.shape[0]}")
    if predictions.size == 0:
        raise InvalidArgumentError("cannot score empty predictions")
    return float(np.mean(np.abs(predictions.astype(np.int64) - truth.astype(np.int64))))


def ordinal_bin(targets, bins: int = 5) -> Tuple[np.ndarray, np.ndarray]:
    """
    Discretize real targets into `bins` equal-width intervals over [min, max]

    Returns:
        Tuple of (labels in 1..bins, bin edges of length bins + 1)
    """
    targets = np.asarray(targets, dtype=np.float64).ravel()
    if bins < 1:
        raise InvalidArgumentError(f"bins must be positive, got {bins}")
    lo, hi = float(np.min(targets)), float(np.max(targets))
    if not hi > lo:
        raise InvalidArgumentError("cannot bin constant targets")
    edges = np.linspace(lo, hi, bins + 1)
    return assign_bins(targets, edges), edges


def assign_bins(targets, edges: np.ndarray) -> np.ndarray:
    """
    Bin labels for new targets under previously computed edges; out-of-range values clamp
    """
    targets = np.asarray(targets, dtype=np.float64).ravel()
    bins = len(edges) - 1
    position = np.floor((targets - edges[0]) * bins / (edges[-1] - edges[0]))
    return np.clip(position, 0, bins - 1).astype(np.int64) + 1


def class_average_distributions(distributions: np.ndarray, labels) -> Dict[int, np.ndarray]:
    """
    Mean predicted distribution over the points of each true class
    """
    labels = np.asarray(labels).ravel().astype(np.int64)
    if labels.shape[0] != distributions.shape[0]:
        raise InvalidArgumentError(f"{labels.shape[0]} labels for {distributions.shape[0]} distributions")
    return {int(c): distributions[labels == c].mean(axis=0) for c in np.unique(labels)}


def error_group_variance(predicted, truth, variances) -> Dict[int, Dict[str, float]]:
    """
    Summary of prediction variances grouped by |predicted class - true class|
    """
    predicted = np.asarray(predicted).ravel().astype(np.int64)
    truth = np.asarray(truth).ravel().astype(np.int64)
    variances = np.asarray(variances, dtype=np.float64).ravel()
    if not predicted.shape == truth.shape == variances.shape:
        raise InvalidArgumentError("predicted, truth and variances must have equal lengths")
    errors = np.abs(predicted - truth)
    stats = {}
    for err in np.unique(errors):
        group = variances[errors == err]
        q1, median, q3 = np.percentile(group, [25, 50, 75])
        stats[int(err)] = {
            "count": int(group.size),
            "mean": float(group.mean()),
            "q1": float(q1),
            "median": float(median),
            "q3": float(q3),
        }
    return stats
