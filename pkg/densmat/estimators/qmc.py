"""
Quantum measurement classification (QMC)

A single density matrix over the joint space H_X (x) H_Y. Prediction projects
the input subsystem onto the query embedding and traces it out, leaving an
output-side density matrix whose diagonal is the predicted distribution.
"""

import logging
import time
from dataclasses import dataclass
from typing import Literal, Optional, TextIO, Tuple, Union

import numpy as np
from scipy.special import softmax

from densmat.config import settings
from densmat.estimators.density_ops import (
    MIN_EVIDENCE,
    FactorizedDensityMatrix,
    factorize_embeddings,
    measure_and_collapse,
    tensor_embed,
)
from densmat.estimators.dmkde import embed
from densmat.estimators.feature_maps import OneHotMap, RffMap, SoftmaxMap, apply_output_map, build_rff
from densmat.exceptions import InvalidArgumentError
from densmat.models import OptimizerConfig
from densmat.training import minimize

logger = logging.getLogger(__name__)

LOG_PROB_FLOOR = np.log(1e-30)
MAX_DEFAULT_RANK = 512
OutputMap = Union[OneHotMap, SoftmaxMap]


@dataclass(frozen=True, eq=False)
class QmcModel:
    """
    Joint density matrix with its input and output feature maps
    """

    input_map: RffMap
    output_map: OutputMap
    joint: FactorizedDensityMatrix
    gamma: float
    seed: int
    trained_by: Literal["estimation", "sgd"] = "estimation"

    @property
    def dx(self) -> int:
        return self.input_map.dim_out

    @property
    def dy(self) -> int:
        return self.output_map.dim


@dataclass(frozen=True, eq=False)
class QmcPrediction:
    """
    Output-side density matrices, their diagonals and the collapse evidence
    """

    rho_y: np.ndarray  # n x Dy x Dy
    diag: np.ndarray  # n x Dy
    evidence: np.ndarray  # n


def default_rank(n_samples: int, joint_dim: int) -> int:
    return min(n_samples, joint_dim, MAX_DEFAULT_RANK)


def _rows_per_chunk(joint_dim: int) -> int:
    return max(1, min(settings.estimation_chunk_size, (1 << 22) // joint_dim))


def joint_embeddings(zx: np.ndarray, zy: np.ndarray, chunk: int):
    """
    Stream of tensor-product embeddings, `chunk` rows at a time
    """
    for start in range(0, zx.shape[0], chunk):
        yield tensor_embed(zx[start:start + chunk], zy[start:start + chunk])


def fit_estimation(
    X: np.ndarray,
    y,
    gamma: float,
    D: int,
    output_map: OutputMap,
    r: Optional[int] = None,
    seed: int = 0,
    input_map: Optional[RffMap] = None,
) -> QmcModel:
    """
    Average joint outer products and factorize them to rank r

    Args:
        X: N x d inputs
        y: N outputs (labels in 1..K for a OneHotMap, values in [0, 1] for a SoftmaxMap)
        gamma: Spread of the input kernel
        D: Number of input random Fourier features
        output_map: Output feature map
        r: Rank of the joint factorization (default min(N, Dx*Dy, 512))
        seed: Seed of the RFF draw
        input_map: Input map to use instead of drawing one

    Returns:
        QmcModel trained by estimation
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.shape[0] < 1:
        raise InvalidArgumentError("cannot fit a model on zero samples")
    y = np.asarray(y).ravel()
    if y.shape[0] != X.shape[0]:
        raise InvalidArgumentError(f"{y.shape[0]} outputs for {X.shape[0]} inputs")

    started = time.perf_counter()
    input_map = input_map or build_rff(X.shape[1], D, gamma / 2.0, seed)
    joint_dim = input_map.dim_out * output_map.dim
    r = default_rank(X.shape[0], joint_dim) if r is None else r
    if r > joint_dim:
        raise InvalidArgumentError(f"rank r={r} exceeds joint dimension {joint_dim}")

    zx = embed(input_map, X, "normalized")
    zy = apply_output_map(output_map, y)
    joint = factorize_embeddings(
        joint_embeddings(zx, zy, _rows_per_chunk(joint_dim)),
        dim=joint_dim,
        r=r,
    )
    logger.info(
        f"QMC estimation: N={X.shape[0]}, Dx={input_map.dim_out}, Dy={output_map.dim}, r={r} "
        f"in {time.perf_counter() - started:.3f}s"
    )
    return QmcModel(
        input_map=input_map,
        output_map=output_map,
        joint=joint,
        gamma=float(gamma),
        seed=int(seed),
    )


def predict_distribution(model: QmcModel, X: np.ndarray) -> QmcPrediction:
    """
    Collapse the joint state on each query and trace out the input subsystem

    Raises:
        ZeroEvidenceError: If a query has no support under the model
    """
    zx = embed(model.input_map, X, "normalized")
    state = measure_and_collapse(model.joint, zx, model.dx, model.dy)
    diag = np.einsum("nbb->nb", state.rho_y).copy()
    return QmcPrediction(rho_y=state.rho_y, diag=diag, evidence=np.asarray(state.evidence))


def classify(model: QmcModel, X: np.ndarray) -> np.ndarray:
    """
    Labels 1..K by the largest diagonal entry; ties go to the lowest index
    """
    return np.argmax(predict_distribution(model, X).diag, axis=1) + 1


def _collapse_terms(v: np.ndarray, lam: np.ndarray, zx: np.ndarray, dx: int, dy: int):
    a = np.einsum("na,rab->nrb", zx, v.reshape(v.shape[0], dx, dy))
    q = np.einsum("nrb,r->nb", a * a, lam)
    return a, q


def _joint_grads(g_q: np.ndarray, a: np.ndarray, zx: np.ndarray, lam: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    # gradients of sum_nb g_q[n,b] q[n,b] w.r.t. V (r x Dx*Dy) and theta
    r = lam.shape[0]
    grad_v = 2.0 * lam[:, None, None] * np.einsum("na,nrb,nb->rab", zx, a, g_q)
    grad_lam = np.einsum("nb,nrb->r", g_q, a * a)
    grad_theta = lam * (grad_lam - lam @ grad_lam)
    return grad_v.reshape(r, -1), grad_theta


def log_loss_and_grad(
    params: dict,
    zx: np.ndarray,
    targets: np.ndarray,
    dx: int,
    dy: int,
) -> Tuple[float, dict]:
    """
    Summed cross-entropy between target distributions and the collapsed diagonals

    Args:
        params: {"v": r x (Dx*Dy) components, "theta": r eigenvalue logits}
        zx: B x Dx normalized input embeddings
        targets: B x Dy target distributions (squared output embeddings)

    Returns:
        Tuple of (loss, {"v": dL/dV, "theta": dL/dtheta})
    """
    v = params["v"]
    lam = softmax(params["theta"])
    a, q = _collapse_terms(v, lam, zx, dx, dy)
    evidence = q.sum(axis=1)

    with np.errstate(divide="ignore", invalid="ignore"):
        log_p = np.log(q) - np.log(evidence)[:, None]
    live = log_p > LOG_PROB_FLOOR
    log_p = np.where(live, log_p, LOG_PROB_FLOOR)
    loss = float(-np.sum(targets * log_p))

    weight = np.where(live, targets, 0.0)
    g_q = np.zeros_like(q)
    safe_q = np.where(live, q, 1.0)
    g_q[live] = -weight[live] / safe_q[live]
    has_mass = evidence > MIN_EVIDENCE
    g_q[has_mass] += (weight[has_mass].sum(axis=1) / evidence[has_mass])[:, None]

    grad_v, grad_theta = _joint_grads(g_q, a, zx, lam)
    return loss, {"v": grad_v, "theta": grad_theta}


def fit_sgd(
    X: np.ndarray,
    y,
    gamma: float,
    D: int,
    output_map: OutputMap,
    r: Optional[int] = None,
    seed: int = 0,
    optimizer: Optional[OptimizerConfig] = None,
    log_sink: Optional[TextIO] = None,
    init: Optional[QmcModel] = None,
) -> QmcModel:
    """
    QMC-SGD: Adam on the joint components and eigenvalue logits

    The input RFF map stays frozen. Warm-starts from estimation unless `init`
    is supplied.

    Returns:
        QmcModel with trained_by="sgd"
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    optimizer = optimizer or OptimizerConfig()
    if init is None:
        init = fit_estimation(X, y, gamma, D, output_map, r=r, seed=seed)

    if optimizer.epochs == 0:
        return QmcModel(
            input_map=init.input_map,
            output_map=init.output_map,
            joint=FactorizedDensityMatrix(v=init.joint.v.copy(), lam=init.joint.lam.copy()),
            gamma=float(gamma),
            seed=int(seed),
            trained_by="sgd",
        )

    zx = embed(init.input_map, X, "normalized")
    targets = apply_output_map(init.output_map, np.asarray(y).ravel()) ** 2
    dx, dy = init.dx, init.dy
    params = {"v": init.joint.v, "theta": np.log(np.maximum(init.joint.lam, 1e-12))}

    def batch_loss(p, idx):
        return log_loss_and_grad(p, zx[idx], targets[idx], dx, dy)

    started = time.perf_counter()
    params, history = minimize(params, batch_loss, X.shape[0], optimizer, log_sink=log_sink)
    logger.info(
        f"QMC-SGD: {optimizer.epochs} epochs, final loss {history[-1].loss:.6g} "
        f"in {time.perf_counter() - started:.3f}s"
    )
    return QmcModel(
        input_map=init.input_map,
        output_map=init.output_map,
        joint=FactorizedDensityMatrix(v=params["v"], lam=softmax(params["theta"])),
        gamma=float(gamma),
        seed=int(seed),
        trained_by="sgd",
    )
