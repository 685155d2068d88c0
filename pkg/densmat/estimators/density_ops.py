"""
Density-matrix algebra

Estimation by averaging outer products, low-rank spectral factorization, the
Born rule, tensor-product embeddings, measurement-and-collapse and the partial
trace. Joint spaces use the X-major Kronecker layout: index (a, b) of
H_X (x) H_Y maps to a * Dy + b, so a joint vector reshapes to (Dx, Dy).
"""

import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Union

import numpy as np

from densmat.config import settings
from densmat.estimators.eigensolver import symmetric_eigh
from densmat.exceptions import InvalidArgumentError, ZeroEvidenceError

logger = logging.getLogger(__name__)

UNIT_NORM_TOL = 1e-6
MIN_EVIDENCE = 1e-300


@dataclass(frozen=True, eq=False)
class FactorizedDensityMatrix:
    """
    Low-rank density matrix rho = V^T diag(lam) V

    Rows of `v` are the component vectors, `lam` their nonnegative weights.
    """

    v: np.ndarray  # r x D
    lam: np.ndarray  # r

    @property
    def rank(self) -> int:
        return int(self.v.shape[0])

    @property
    def dim(self) -> int:
        return int(self.v.shape[1])

    def to_dense(self) -> np.ndarray:
        return (self.v.T * self.lam) @ self.v


@dataclass(frozen=True, eq=False)
class ConditionalState:
    """
    Output-side state after collapsing the input subsystem
    """

    rho_y: np.ndarray  # Dy x Dy (or n x Dy x Dy for a batch)
    evidence: Union[float, np.ndarray]


DensityMatrix = Union[FactorizedDensityMatrix, np.ndarray]


def _check_unit_rows(z: np.ndarray, tol: float = UNIT_NORM_TOL) -> None:
    norms = np.linalg.norm(z, axis=1)
    if not np.all(np.abs(norms - 1.0) <= tol):
        worst = int(np.argmax(np.abs(norms - 1.0)))
        raise InvalidArgumentError(f"embedding {worst} has norm {norms[worst]:.12g}, expected 1")


class DensityAccumulator:
    """
    Streaming sum of outer products z z^T with compensated (Kahan) accumulation

    Batches can be added in any order; partial accumulators from independent
    shards are combined with `merge`.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise InvalidArgumentError(f"dimension must be positive, got {dim}")
        self.dim = dim
        self.count = 0
        self._sum = np.zeros((dim, dim))
        self._compensation = np.zeros((dim, dim))

    def _kahan_add(self, term: np.ndarray) -> None:
        y = term - self._compensation
        t = self._sum + y
        self._compensation = (t - self._sum) - y
        self._sum = t

    def add(self, embeddings: np.ndarray, weights: Optional[np.ndarray] = None) -> "DensityAccumulator":
        z = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
        if z.shape[1] != self.dim:
            raise InvalidArgumentError(f"embedding dimension {z.shape[1]} != {self.dim}")
        if z.shape[0] == 0:
            return self
        if weights is None:
            self._kahan_add(z.T @ z)
        else:
            self._kahan_add((z.T * weights) @ z)
        self.count += z.shape[0]
        return self

    def merge(self, other: "DensityAccumulator") -> "DensityAccumulator":
        if other.dim != self.dim:
            raise InvalidArgumentError("cannot merge accumulators of different dimension")
        self._kahan_add(other._sum)
        self._kahan_add(-other._compensation)
        self.count += other.count
        return self

    def result(self) -> np.ndarray:
        if self.count == 0:
            raise InvalidArgumentError("cannot estimate a density matrix from zero embeddings")
        rho = (self._sum - self._compensation) / self.count
        return 0.5 * (rho + rho.T)


def estimate_density_matrix(
    embeddings: Union[np.ndarray, Iterable[np.ndarray]],
    check_unit: bool = True,
) -> np.ndarray:
    """
    rho = (1/N) sum_i z_i z_i^T over a stream of unit embeddings

    Args:
        embeddings: N x D array, or an iterable of batches (each n_i x D)
        check_unit: Validate that every embedding has unit norm

    Returns:
        Dense D x D density matrix
    """
    batches = [embeddings] if isinstance(embeddings, np.ndarray) else embeddings
    accumulator = None
    for batch in batches:
        z = np.atleast_2d(np.asarray(batch, dtype=np.float64))
        if z.size == 0:
            continue
        if check_unit:
            _check_unit_rows(z)
        if accumulator is None:
            accumulator = DensityAccumulator(z.shape[1])
        for start in range(0, z.shape[0], settings.estimation_chunk_size):
            accumulator.add(z[start:start + settings.estimation_chunk_size])
    if accumulator is None:
        raise InvalidArgumentError("cannot estimate a density matrix from an empty stream")
    return accumulator.result()


def factorize(rho: np.ndarray, r: int, renormalize: bool = False) -> FactorizedDensityMatrix:
    """
    Rank-r spectral factorization of a symmetric PSD matrix

    Args:
        rho: Dense D x D density matrix
        r: Target rank, 1 <= r <= D
        renormalize: Rescale the kept eigenvalues to sum to 1

    Returns:
        Top-r eigenpairs, descending; rounding negatives clamped to 0
    """
    rho = np.asarray(rho, dtype=np.float64)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidArgumentError(f"expected a square matrix, got shape {rho.shape}")
    if not 1 <= r <= rho.shape[0]:
        raise InvalidArgumentError(f"rank r={r} must lie in 1..{rho.shape[0]}")
    w, u = symmetric_eigh(rho, top=r)
    lam = np.clip(w, 0.0, None)
    if renormalize and lam.sum() > 0:
        lam = lam / lam.sum()
    return FactorizedDensityMatrix(v=np.ascontiguousarray(u.T), lam=lam)


class IncrementalFactorizer:
    """
    Low-rank factorization of sum_i w_i z_i z_i^T without forming D x D matrices

    Embeddings are buffered and folded into the current factor every
    `merge_every` rows: the stacked matrix B = [sqrt(lam) V; sqrt(w) Z] has the
    same Gram spectrum as B^T B, so the eigendecomposition of the small
    Gram matrix B B^T gives the new orthonormal factor. Exact whenever the
    accumulated rank never exceeds `rank`.
    """

    def __init__(self, dim: int, rank: int, merge_every: Optional[int] = None):
        if rank < 1 or dim < 1:
            raise InvalidArgumentError(f"invalid factorizer shape dim={dim}, rank={rank}")
        self.dim = dim
        self.rank = min(rank, dim)
        self.merge_every = merge_every or 4 * self.rank
        self.count = 0
        self._v = np.zeros((0, dim))
        self._lam = np.zeros(0)
        self._buffer = []
        self._buffered = 0

    def add(self, embeddings: np.ndarray) -> "IncrementalFactorizer":
        z = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
        if z.shape[1] != self.dim:
            raise InvalidArgumentError(f"embedding dimension {z.shape[1]} != {self.dim}")
        self._buffer.append(z)
        self._buffered += z.shape[0]
        self.count += z.shape[0]
        if self._buffered >= self.merge_every:
            self._fold()
        return self

    def merge(self, other: "IncrementalFactorizer") -> "IncrementalFactorizer":
        if other.dim != self.dim:
            raise InvalidArgumentError("cannot merge factorizers of different dimension")
        other._fold()
        self._buffer.append(other._v * np.sqrt(other._lam)[:, None])
        self._buffered += other._v.shape[0]
        self.count += other.count
        self._fold()
        return self

    def _fold(self) -> None:
        if not self._buffer:
            return
        stacked = np.vstack([self._v * np.sqrt(self._lam)[:, None]] + self._buffer)
        self._buffer = []
        self._buffered = 0
        gram = stacked @ stacked.T
        k = min(self.rank, gram.shape[0])
        w, u = symmetric_eigh(gram, top=k)
        keep = w > np.finfo(np.float64).eps * max(float(w[0]), 1.0) * gram.shape[0]
        w, u = w[keep], u[:, keep]
        self._v = (u.T @ stacked) / np.sqrt(w)[:, None]
        self._lam = w

    def result(self, r: Optional[int] = None, renormalize: bool = False) -> FactorizedDensityMatrix:
        if self.count == 0:
            raise InvalidArgumentError("cannot estimate a density matrix from zero embeddings")
        self._fold()
        r = self.rank if r is None else min(r, self.rank)
        lam = self._lam[:r] / self.count
        v = self._v[:r]
        if renormalize and lam.sum() > 0:
            lam = lam / lam.sum()
        return FactorizedDensityMatrix(v=np.ascontiguousarray(v), lam=lam)


def factorize_embeddings(
    batches: Iterable[np.ndarray],
    dim: int,
    r: int,
    renormalize: bool = False,
    check_unit: bool = True,
) -> FactorizedDensityMatrix:
    """
    Estimate and factorize rho from a stream of embeddings in one pass

    Dimensions up to settings.dense_dim_limit accumulate the dense average and
    factorize it (O(D^2 N + D^3)); larger ones use the incremental Gram
    factorizer with rank budget max(r, settings.working_rank).
    """
    if not 1 <= r <= dim:
        raise InvalidArgumentError(f"rank r={r} must lie in 1..{dim}")

    if dim <= settings.dense_dim_limit:
        rho = estimate_density_matrix(batches, check_unit=check_unit)
        return factorize(rho, r, renormalize=renormalize)

    factorizer = IncrementalFactorizer(dim, max(r, min(settings.working_rank, dim)))
    for batch in batches:
        z = np.atleast_2d(np.asarray(batch, dtype=np.float64))
        if z.size == 0:
            continue
        if check_unit:
            _check_unit_rows(z)
        factorizer.add(z)
    logger.debug(f"Incremental factorization of {factorizer.count} embeddings, dim={dim}")
    fact = factorizer.result(r, renormalize=renormalize)
    if fact.rank < r:
        # pad with zero-weight orthonormal directions so the stored rank is r
        q, _ = np.linalg.qr(np.vstack([fact.v, np.eye(dim)[:r]]).T)
        pad = q.T[fact.rank:r]
        fact = FactorizedDensityMatrix(
            v=np.vstack([fact.v, pad]),
            lam=np.concatenate([fact.lam, np.zeros(r - fact.rank)]),
        )
    return fact


def born_probability(rho: DensityMatrix, phi: np.ndarray, check_unit: bool = True):
    """
    Born rule <phi| rho |phi>

    Args:
        rho: Factorized or dense density matrix
        phi: Unit vector of length D, or an n x D batch
        check_unit: Validate unit norm of phi

    Returns:
        Probability (float) or vector of n probabilities
    """
    single = np.ndim(phi) == 1
    z = np.atleast_2d(np.asarray(phi, dtype=np.float64))
    dim = rho.dim if isinstance(rho, FactorizedDensityMatrix) else np.shape(rho)[0]
    if z.shape[1] != dim:
        raise InvalidArgumentError(f"state dimension {z.shape[1]} != density matrix dimension {dim}")
    if check_unit:
        _check_unit_rows(z)

    if isinstance(rho, FactorizedDensityMatrix):
        s = z @ rho.v.T
        p = (s * s) @ rho.lam
    else:
        p = np.einsum("nd,de,ne->n", z, np.asarray(rho, dtype=np.float64), z)
    return float(p[0]) if single else p


def tensor_embed(zx: np.ndarray, zy: np.ndarray) -> np.ndarray:
    """
    Kronecker product zx (x) zy in X-major layout; batches multiply row-wise
    """
    zx = np.asarray(zx, dtype=np.float64)
    zy = np.asarray(zy, dtype=np.float64)
    if zx.ndim == 1 and zy.ndim == 1:
        return np.kron(zx, zy)
    zx = np.atleast_2d(zx)
    zy = np.atleast_2d(zy)
    if zx.shape[0] != zy.shape[0]:
        raise InvalidArgumentError(f"batch sizes differ: {zx.shape[0]} vs {zy.shape[0]}")
    return np.einsum("na,nb->nab", zx, zy).reshape(zx.shape[0], -1)


def _joint_components(rho_train: FactorizedDensityMatrix, dx: int, dy: int) -> np.ndarray:
    if rho_train.dim != dx * dy:
        raise InvalidArgumentError(f"joint dimension {rho_train.dim} != {dx} x {dy}")
    return rho_train.v.reshape(rho_train.rank, dx, dy)


def collapse_unnormalized(rho_train: FactorizedDensityMatrix, zx: np.ndarray, dx: int, dy: int):
    """
    Components a_k = zx^T V_k for a batch of queries

    Returns:
        Array n x r x Dy; rho_Y is proportional to sum_k lam_k a_k a_k^T
    """
    components = _joint_components(rho_train, dx, dy)
    return np.einsum("na,rab->nrb", zx, components)


def measure_and_collapse(
    rho_train: FactorizedDensityMatrix,
    zx: np.ndarray,
    dx: int,
    dy: int,
) -> ConditionalState:
    """
    Project the input subsystem onto zx and trace it out

    Implements rho_Y = Tr_X[pi rho pi] / Tr[pi rho pi] with pi = zx zx^T (x) Id
    through the reshape of each component row into a Dx x Dy matrix.

    Args:
        rho_train: Factorized joint density matrix over Dx * Dy
        zx: Unit query embedding of length Dx (or n x Dx batch)
        dx: Input-side dimension
        dy: Output-side dimension

    Returns:
        ConditionalState with unit-trace rho_Y and the pre-normalization evidence

    Raises:
        ZeroEvidenceError: If the query has no support under the model
    """
    single = np.ndim(zx) == 1
    z = np.atleast_2d(np.asarray(zx, dtype=np.float64))
    if z.shape[1] != dx:
        raise InvalidArgumentError(f"query dimension {z.shape[1]} != {dx}")
    _check_unit_rows(z)

    a = collapse_unnormalized(rho_train, z, dx, dy)
    rho_y = np.einsum("nrb,r,nrc->nbc", a, rho_train.lam, a)
    evidence = np.einsum("nbb->n", rho_y)
    empty = np.flatnonzero(evidence < MIN_EVIDENCE)
    if empty.size:
        raise ZeroEvidenceError(
            "query has no support under the model",
            {"row": int(empty[0]), "evidence": float(evidence[empty[0]])},
        )
    rho_y = rho_y / evidence[:, None, None]
    rho_y = 0.5 * (rho_y + np.transpose(rho_y, (0, 2, 1)))
    if single:
        return ConditionalState(rho_y=rho_y[0], evidence=float(evidence[0]))
    return ConditionalState(rho_y=rho_y, evidence=evidence)


def partial_trace_x(rho: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """
    Tr_X of a dense joint matrix over H_X (x) H_Y
    """
    rho = np.asarray(rho, dtype=np.float64)
    if rho.shape != (dx * dy, dx * dy):
        raise InvalidArgumentError(f"joint matrix shape {rho.shape} != ({dx * dy}, {dx * dy})")
    return np.trace(rho.reshape(dx, dy, dx, dy), axis1=0, axis2=2)
