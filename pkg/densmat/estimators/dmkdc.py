"""
Density matrix kernel density classification (DMKDC)

One factorized density matrix per class over a shared normalized RFF map,
combined with class priors through Bayes' rule.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Literal, Optional, TextIO, Tuple

import numpy as np
from scipy.special import softmax

from densmat.config import settings
from densmat.estimators.density_ops import FactorizedDensityMatrix, born_probability, factorize_embeddings
from densmat.estimators.dmkde import embed
from densmat.estimators.feature_maps import RffMap, build_rff
from densmat.exceptions import InvalidArgumentError
from densmat.models import OptimizerConfig
from densmat.training import minimize

logger = logging.getLogger(__name__)

LOG_POSTERIOR_FLOOR = np.log(1e-30)


@dataclass(frozen=True, eq=False)
class DmkdcModel:
    """
    Per-class density matrices sharing one RFF map
    """

    rff: RffMap
    priors: np.ndarray  # K
    per_class: List[FactorizedDensityMatrix]
    gamma: float
    seed: int
    trained_by: Literal["estimation", "sgd"] = "estimation"

    @property
    def n_classes(self) -> int:
        return len(self.per_class)


def check_labels(y, n_samples: int, n_classes: Optional[int] = None) -> Tuple[np.ndarray, int]:
    """
    Validate integer labels in 1..K and return them with K
    """
    labels = np.asarray(y).ravel()
    if labels.shape[0] != n_samples:
        raise InvalidArgumentError(f"{labels.shape[0]} labels for {n_samples} samples")
    if labels.size and not np.all(np.equal(np.mod(labels, 1), 0)):
        raise InvalidArgumentError("class labels must be integers")
    labels = labels.astype(np.int64)
    K = int(n_classes if n_classes is not None else labels.max(initial=0))
    if K < 1 or np.any(labels < 1) or np.any(labels > K):
        raise InvalidArgumentError(f"class labels must lie in 1..{K}")
    return labels, K


def fit_estimation(
    X: np.ndarray,
    y,
    gamma: float,
    D: int,
    r: int,
    seed: int,
    n_classes: Optional[int] = None,
    rff: Optional[RffMap] = None,
) -> DmkdcModel:
    """
    Estimate priors as class frequencies and one density matrix per class

    Args:
        X: N x d training samples
        y: Labels in 1..K
        gamma: Spread of the target Gaussian kernel
        D: Number of random Fourier features
        r: Rank of every per-class factorization
        seed: Seed of the RFF draw
        n_classes: K, when it exceeds the largest observed label
        rff: Shared map to use instead of drawing one

    Returns:
        DmkdcModel trained by estimation

    Raises:
        InvalidArgumentError: If a class has no samples or r > D
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    labels, K = check_labels(y, X.shape[0], n_classes)
    if r > D:
        raise InvalidArgumentError(f"rank r={r} exceeds feature dimension D={D}")
    counts = np.bincount(labels, minlength=K + 1)[1:]
    for k in range(K):
        if counts[k] == 0:
            raise InvalidArgumentError(f"class {k + 1} has no training samples")

    started = time.perf_counter()
    rff = rff or build_rff(X.shape[1], D, gamma / 2.0, seed)
    Z = embed(rff, X, "normalized")

    def fit_class(k: int) -> FactorizedDensityMatrix:
        return factorize_embeddings([Z[labels == k + 1]], dim=rff.dim_out, r=r)

    with ThreadPoolExecutor(max_workers=min(settings.threads, K)) as pool:
        per_class = list(pool.map(fit_class, range(K)))

    logger.info(
        f"DMKDC estimation: N={X.shape[0]}, K={K}, D={D}, r={r} "
        f"in {time.perf_counter() - started:.3f}s"
    )
    return DmkdcModel(
        rff=rff,
        priors=counts / counts.sum(),
        per_class=per_class,
        gamma=float(gamma),
        seed=int(seed),
    )


def class_densities(model: DmkdcModel, X: np.ndarray) -> np.ndarray:
    """
    Unscaled per-class Born values, N x K (the 1/M_gamma factor cancels in the posterior)
    """
    Z = embed(model.rff, X, "normalized")
    return np.column_stack([born_probability(rho, Z, check_unit=False) for rho in model.per_class])


def posterior_from_densities(priors: np.ndarray, densities: np.ndarray, return_flags: bool = False):
    """
    pi_i y_i / sum_j pi_j y_j per row; rows with no mass become uniform and are flagged
    """
    weighted = np.maximum(densities, 0.0) * priors
    total = weighted.sum(axis=1)
    degenerate = ~(total > 0.0)
    post = np.empty_like(weighted)
    post[~degenerate] = weighted[~degenerate] / total[~degenerate, None]
    post[degenerate] = 1.0 / weighted.shape[1]
    if degenerate.any():
        logger.warning(f"{int(degenerate.sum())} point(s) have zero density under every class; posterior set to uniform")
    return (post, degenerate) if return_flags else post


def posterior(model: DmkdcModel, X: np.ndarray, return_flags: bool = False):
    """
    Posterior class probabilities, N x K

    Args:
        model: Trained classifier
        X: Query points
        return_flags: Also return a boolean vector marking degenerate rows

    Returns:
        Posterior matrix, or (posterior, flags) when return_flags is set
    """
    return posterior_from_densities(model.priors, class_densities(model, X), return_flags)


def classify(model: DmkdcModel, X: np.ndarray) -> np.ndarray:
    """
    Labels 1..K by maximum posterior; ties go to the lowest class index
    """
    return np.argmax(posterior(model, X), axis=1) + 1


def cross_entropy_loss_and_grad(
    params: dict,
    Z: np.ndarray,
    labels: np.ndarray,
    priors: np.ndarray,
) -> Tuple[float, dict]:
    """
    Summed negative log-posterior of the true classes and its gradients

    Args:
        params: {"v": K x r x D components, "theta": K x r eigenvalue logits}
        Z: B x D normalized embeddings
        labels: B labels in 1..K
        priors: Fixed class priors

    Returns:
        Tuple of (loss, {"v": dL/dV, "theta": dL/dtheta})
    """
    v = params["v"]
    lam = softmax(params["theta"], axis=1)
    rows = np.arange(Z.shape[0])
    target = labels - 1

    s = np.einsum("nd,jkd->njk", Z, v)
    dens = np.einsum("njk,jk->nj", s * s, lam)
    total = dens @ priors
    true_dens = dens[rows, target]
    with np.errstate(divide="ignore", invalid="ignore"):
        log_post = np.log(priors[target] * true_dens) - np.log(total)
    clamped = ~(log_post > LOG_POSTERIOR_FLOOR)
    log_post = np.where(clamped, LOG_POSTERIOR_FLOOR, log_post)
    loss = float(-np.sum(log_post))

    g = np.zeros_like(dens)
    live = ~clamped
    g[live] = priors[None, :] / total[live, None]
    g[rows[live], target[live]] -= 1.0 / true_dens[live]

    grad_v = 2.0 * np.einsum("nj,njk,jk,nd->jkd", g, s, lam, Z)
    grad_lam = np.einsum("nj,njk->jk", g, s * s)
    grad_theta = lam * (grad_lam - np.sum(lam * grad_lam, axis=1, keepdims=True))
    return loss, {"v": grad_v, "theta": grad_theta}


def fit_sgd(
    X: np.ndarray,
    y,
    gamma: float,
    D: int,
    r: int,
    seed: int,
    optimizer: Optional[OptimizerConfig] = None,
    log_sink: Optional[TextIO] = None,
    init: Optional[DmkdcModel] = None,
    n_classes: Optional[int] = None,
) -> DmkdcModel:
    """
    DMKDC-SGD: Adam on the cross-entropy of the posterior

    The RFF map and the priors stay frozen; each class keeps its own
    softmax-parameterized eigenvalues.

    Returns:
        DmkdcModel with trained_by="sgd"
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    labels, K = check_labels(y, X.shape[0], n_classes)
    optimizer = optimizer or OptimizerConfig()

    if init is None:
        init = fit_estimation(X, labels, gamma, D, r, seed, n_classes=K)
    v0 = np.stack([rho.v for rho in init.per_class])
    lam0 = np.stack([rho.lam for rho in init.per_class])

    if optimizer.epochs == 0:
        return DmkdcModel(
            rff=init.rff,
            priors=init.priors.copy(),
            per_class=[FactorizedDensityMatrix(v=v.copy(), lam=l.copy()) for v, l in zip(v0, lam0)],
            gamma=float(gamma),
            seed=int(seed),
            trained_by="sgd",
        )

    Z = embed(init.rff, X, "normalized")
    priors = init.priors
    params = {"v": v0, "theta": np.log(np.maximum(lam0, 1e-12))}

    def batch_loss(p, idx):
        return cross_entropy_loss_and_grad(p, Z[idx], labels[idx], priors)

    started = time.perf_counter()
    params, history = minimize(params, batch_loss, X.shape[0], optimizer, log_sink=log_sink)
    logger.info(
        f"DMKDC-SGD: {optimizer.epochs} epochs, final loss {history[-1].loss:.6g} "
        f"in {time.perf_counter() - started:.3f}s"
    )
    lam = softmax(params["theta"], axis=1)
    return DmkdcModel(
        rff=init.rff,
        priors=priors.copy(),
        per_class=[FactorizedDensityMatrix(v=v, lam=l) for v, l in zip(params["v"], lam)],
        gamma=float(gamma),
        seed=int(seed),
        trained_by="sgd",
    )


def accuracy(predicted, truth) -> float:
    predicted = np.asarray(predicted).ravel()
    truth = np.asarray(truth).ravel()
    if predicted.shape != truth.shape:
        raise InvalidArgumentError(f"length mismatch: {predicted.shape[0]} vs {truth.shape[0]}")
    return float(np.mean(predicted == truth))
