"""
Density matrix kernel density estimation (DMKDE)

x -> normalized RFF embedding z -> Born probability <z| rho |z> / M_gamma.
The RFF map is sampled for spread gamma / 2 so that squared inner products of
embeddings approximate the Gaussian kernel of spread gamma.
"""

import logging
import time
from dataclasses import dataclass
from typing import Literal, Optional, TextIO, Tuple

import numpy as np
from scipy.special import softmax

from densmat.estimators.density_ops import (
    FactorizedDensityMatrix,
    born_probability,
    estimate_density_matrix,
    factorize_embeddings,
)
from densmat.estimators.feature_maps import RffMap, apply_rff, apply_rff_normalized, build_rff, one_hot
from densmat.exceptions import InvalidArgumentError
from densmat.models import OptimizerConfig
from densmat.training import minimize

logger = logging.getLogger(__name__)

LOG_DENSITY_FLOOR = np.log(1e-30)
Embedding = Literal["normalized", "raw"]


def normalizing_constant(gamma: float, d: int) -> float:
    """
    M_gamma = (pi / gamma)^(d/2), the mass of exp(-gamma ||x||^2) over R^d
    """
    return float((np.pi / gamma) ** (d / 2.0))


def log_normalizing_constant(gamma: float, d: int) -> float:
    return 0.5 * d * (np.log(np.pi) - np.log(gamma))


@dataclass(frozen=True, eq=False)
class DmkdeModel:
    """
    Trained density estimator
    """

    rff: RffMap
    rho: FactorizedDensityMatrix
    gamma: float
    seed: int
    trained_by: Literal["estimation", "sgd"] = "estimation"
    embedding: Embedding = "normalized"

    @property
    def d(self) -> int:
        return self.rff.dim_in

    @property
    def norm_const(self) -> float:
        return normalizing_constant(self.gamma, self.d)


def _check_samples(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2 or X.shape[0] < 1:
        raise InvalidArgumentError(f"expected an N x d sample matrix with N >= 1, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidArgumentError("samples contain NaN or Inf")
    return X


def embed(rff: RffMap, X: np.ndarray, embedding: Embedding = "normalized") -> np.ndarray:
    """
    Batch embedding of samples, N x D
    """
    X = np.asarray(X, dtype=np.float64)
    if embedding == "normalized":
        return np.atleast_2d(apply_rff_normalized(rff, X))
    return np.atleast_2d(apply_rff(rff, X))


def _batches(rff: RffMap, X: np.ndarray, embedding: Embedding, chunk: int = 4096):
    for start in range(0, X.shape[0], chunk):
        yield embed(rff, X[start:start + chunk], embedding)


def fit_estimation(
    X: np.ndarray,
    gamma: float,
    D: int,
    r: int,
    seed: int,
    embedding: Embedding = "normalized",
    renormalize: bool = False,
) -> DmkdeModel:
    """
    Optimization-free DMKDE training: one pass of outer-product averaging

    Args:
        X: N x d training samples
        gamma: Spread of the target Gaussian kernel
        D: Number of random Fourier features
        r: Rank of the factorization
        seed: Seed of the RFF draw
        embedding: "normalized" (unit embeddings) or "raw"
        renormalize: Rescale truncated eigenvalues to sum to 1

    Returns:
        DmkdeModel trained by estimation
    """
    X = _check_samples(X)
    if r > D:
        raise InvalidArgumentError(f"rank r={r} exceeds feature dimension D={D}")
    started = time.perf_counter()
    rff = build_rff(X.shape[1], D, gamma / 2.0, seed)
    rho = factorize_embeddings(
        _batches(rff, X, embedding),
        dim=D,
        r=r,
        renormalize=renormalize,
        check_unit=embedding == "normalized",
    )
    logger.info(
        f"DMKDE estimation: N={X.shape[0]}, d={X.shape[1]}, D={D}, r={r} "
        f"in {time.perf_counter() - started:.3f}s"
    )
    return DmkdeModel(rff=rff, rho=rho, gamma=float(gamma), seed=int(seed), embedding=embedding)


def density(model: DmkdeModel, X: np.ndarray) -> np.ndarray:
    """
    (1/M_gamma) <z(x)| rho |z(x)> for each row of X; cost O(D r) per point
    """
    z = embed(model.rff, X, model.embedding)
    p = born_probability(model.rho, z, check_unit=False)
    return np.maximum(p, 0.0) / model.norm_const


def log_density(model: DmkdeModel, X: np.ndarray) -> np.ndarray:
    """
    Log density, computed without forming M_gamma so it survives large d
    """
    z = embed(model.rff, X, model.embedding)
    p = born_probability(model.rho, z, check_unit=False)
    with np.errstate(divide="ignore"):
        return np.log(np.maximum(p, 0.0)) - log_normalizing_constant(model.gamma, model.d)


def nll_loss_and_grad(
    params: dict,
    Z: np.ndarray,
    log_norm: float,
) -> Tuple[float, dict]:
    """
    Summed negative log-likelihood of a batch and its gradients

    Args:
        params: {"v": r x D components, "theta": r eigenvalue logits}
        Z: B x D embeddings
        log_norm: log M_gamma

    Returns:
        Tuple of (loss, {"v": dL/dV, "theta": dL/dtheta})
    """
    v = params["v"]
    lam = softmax(params["theta"])
    s = Z @ v.T
    q = (s * s) @ lam
    with np.errstate(divide="ignore"):
        log_y = np.log(q) - log_norm
    clamped = ~(log_y > LOG_DENSITY_FLOOR)
    log_y = np.where(clamped, LOG_DENSITY_FLOOR, log_y)
    loss = float(-np.sum(log_y))

    g = np.zeros_like(q)
    g[~clamped] = -1.0 / q[~clamped]
    grad_v = 2.0 * ((g[:, None] * s) * lam).T @ Z
    grad_lam = (g[:, None] * s * s).sum(axis=0)
    grad_theta = lam * (grad_lam - lam @ grad_lam)
    return loss, {"v": grad_v, "theta": grad_theta}


def fit_sgd(
    X: np.ndarray,
    gamma: float,
    D: int,
    r: int,
    seed: int,
    optimizer: Optional[OptimizerConfig] = None,
    log_sink: Optional[TextIO] = None,
    init: Optional[DmkdeModel] = None,
    embedding: Embedding = "normalized",
) -> DmkdeModel:
    """
    DMKDE-SGD: Adam on the negative log-likelihood over V and eigenvalue logits

    The RFF map stays frozen. Eigenvalues are parameterized as softmax(theta),
    so they remain a probability vector throughout training.

    Args:
        X: N x d training samples
        gamma, D, r, seed: As for fit_estimation
        optimizer: Optimizer configuration (defaults: Adam, lr 1e-3, batch 64)
        log_sink: Optional JSON-lines epoch log
        init: Warm-start model (fit_estimation is used when omitted and r <= D)
        embedding: "normalized" or "raw"; a warm start brings its own

    Returns:
        DmkdeModel with trained_by="sgd"
    """
    X = _check_samples(X)
    optimizer = optimizer or OptimizerConfig()

    if init is None and r <= D:
        init = fit_estimation(X, gamma, D, r, seed, embedding=embedding)
    if init is not None:
        rff = init.rff
        embedding = init.embedding
        v0 = init.rho.v
        lam0 = init.rho.lam
    else:
        rff = build_rff(X.shape[1], D, gamma / 2.0, seed)
        rng = np.random.default_rng(seed)
        v0 = rng.normal(0.0, np.sqrt(1.0 / D), size=(r, D))
        lam0 = np.full(r, 1.0 / r)

    if optimizer.epochs == 0:
        return DmkdeModel(
            rff=rff,
            rho=FactorizedDensityMatrix(v=v0.copy(), lam=lam0.copy()),
            gamma=float(gamma),
            seed=int(seed),
            trained_by="sgd",
            embedding=embedding,
        )

    Z = embed(rff, X, embedding)
    log_norm = log_normalizing_constant(gamma, X.shape[1])
    params = {"v": v0, "theta": np.log(np.maximum(lam0, 1e-12))}

    def batch_loss(p, idx):
        return nll_loss_and_grad(p, Z[idx], log_norm)

    started = time.perf_counter()
    params, history = minimize(params, batch_loss, X.shape[0], optimizer, log_sink=log_sink)
    logger.info(
        f"DMKDE-SGD: {optimizer.epochs} epochs, final loss {history[-1].loss:.6g} "
        f"in {time.perf_counter() - started:.3f}s"
    )
    rho = FactorizedDensityMatrix(v=params["v"], lam=softmax(params["theta"]))
    return DmkdeModel(rff=rff, rho=rho, gamma=float(gamma), seed=int(seed), trained_by="sgd", embedding=embedding)


def categorical_density_matrix(X, K: int) -> np.ndarray:
    """
    Density matrix of categorical samples in 1..K under the one-hot map
    """
    if K < 1:
        raise InvalidArgumentError(f"cardinality must be positive, got {K}")
    return estimate_density_matrix(one_hot(np.asarray(X).ravel(), K))


def categorical_density_check(X, K: int) -> np.ndarray:
    """
    Diagonal of the one-hot density matrix: the relative frequency of each category
    """
    return np.diag(categorical_density_matrix(X, K)).copy()
