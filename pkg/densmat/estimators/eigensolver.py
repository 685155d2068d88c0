"""
Symmetric eigendecomposition used by factorization and PCA

Two backends: LAPACK through scipy.linalg.eigh, and a cyclic Jacobi solver
with parallel (round-robin) ordering so that each round applies n/2 disjoint
rotations as vectorized row/column updates.
"""

import logging
from typing import Optional, Tuple

import numpy as np
import scipy.linalg

from densmat.config import settings
from densmat.exceptions import InvalidArgumentError, NumericFailureError

logger = logging.getLogger(__name__)


def _off_diagonal_norm(a: np.ndarray) -> float:
    return float(np.sqrt(max(np.sum(a * a) - np.sum(np.diag(a) ** 2), 0.0)))


def jacobi_eigh(
    a: np.ndarray,
    tol: Optional[float] = None,
    max_sweeps: Optional[int] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Eigenpairs of a real symmetric matrix by cyclic Jacobi rotations

    Args:
        a: Symmetric n x n matrix
        tol: Stop when the off-diagonal Frobenius norm falls below
            tol * ||a||_F (settings.jacobi_tol by default)
        max_sweeps: Sweep limit (settings.jacobi_max_sweeps by default)

    Returns:
        Tuple of (eigenvalues, eigenvectors as columns), unsorted

    Raises:
        NumericFailureError: If the sweep limit is reached first
    """
    tol = settings.jacobi_tol if tol is None else tol
    max_sweeps = settings.jacobi_max_sweeps if max_sweeps is None else max_sweeps

    a = np.array(a, dtype=np.float64, copy=True)
    n = a.shape[0]
    v = np.eye(n)
    if n == 1:
        return a.diagonal().copy(), v

    scale = max(float(np.linalg.norm(a)), np.finfo(np.float64).tiny)
    m = n + (n % 2)
    players = list(range(m))

    off = _off_diagonal_norm(a)
    for sweep in range(max_sweeps):
        if off <= tol * scale:
            logger.debug(f"Jacobi converged after {sweep} sweeps (n={n})")
            return a.diagonal().copy(), v

        for _ in range(m - 1):
            pairs = [
                (min(players[i], players[m - 1 - i]), max(players[i], players[m - 1 - i]))
                for i in range(m // 2)
            ]
            pairs = [(p, q) for p, q in pairs if q < n]
            p = np.array([pq[0] for pq in pairs])
            q = np.array([pq[1] for pq in pairs])

            app = a[p, p]
            aqq = a[q, q]
            apq = a[p, q]
            active = np.abs(apq) > 0.0
            tau = np.zeros_like(apq)
            tau[active] = (aqq[active] - app[active]) / (2.0 * apq[active])
            t = np.where(tau >= 0.0, 1.0, -1.0) / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
            t[~active] = 0.0
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c

            # rows: A <- J^T A
            rp = a[p, :].copy()
            rq = a[q, :].copy()
            a[p, :] = c[:, None] * rp - s[:, None] * rq
            a[q, :] = s[:, None] * rp + c[:, None] * rq
            # columns: A <- A J
            cp = a[:, p].copy()
            cq = a[:, q].copy()
            a[:, p] = cp * c - cq * s
            a[:, q] = cp * s + cq * c
            vp = v[:, p].copy()
            vq = v[:, q].copy()
            v[:, p] = vp * c - vq * s
            v[:, q] = vp * s + vq * c

            players = [players[0], players[-1]] + players[1:-1]

        off = _off_diagonal_norm(a)

    if off <= tol * scale:
        return a.diagonal().copy(), v
    logger.error(f"Jacobi eigensolver did not converge (n={n})")
    raise NumericFailureError(
        "Jacobi eigensolver did not converge",
        {"sweeps": max_sweeps, "off_diagonal_norm": off, "tolerance": tol * scale},
    )


def symmetric_eigh(
    a: np.ndarray,
    top: Optional[int] = None,
    solver: Optional[str] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Descending eigenpairs of a symmetric matrix

    Args:
        a: Symmetric n x n matrix
        top: Keep only the `top` largest eigenpairs (all when None)
        solver: "lapack" or "jacobi" (settings.eigensolver by default)

    Returns:
        Tuple of (eigenvalues descending, eigenvectors as matching columns)
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidArgumentError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    k = n if top is None else int(top)
    if not 1 <= k <= n:
        raise InvalidArgumentError(f"requested {k} eigenpairs of a {n} x {n} matrix")
    if not np.all(np.isfinite(a)):
        raise NumericFailureError("matrix has non-finite entries", {"n": n})

    solver = solver or settings.eigensolver
    a = 0.5 * (a + a.T)

    if solver == "jacobi":
        w, u = jacobi_eigh(a)
        order = np.argsort(-w, kind="stable")[:k]
        return w[order], u[:, order]

    if solver != "lapack":
        raise InvalidArgumentError(f"unknown eigensolver '{solver}'")
    try:
        if k < n:
            w, u = scipy.linalg.eigh(a, subset_by_index=[n - k, n - 1])
        else:
            w, u = scipy.linalg.eigh(a)
    except (scipy.linalg.LinAlgError, ValueError) as e:
        logger.error(f"LAPACK eigensolver failed: {str(e)}")
        raise NumericFailureError("LAPACK eigensolver failed", {"n": n, "reason": str(e)})
    return w[::-1].copy(), u[:, ::-1].copy()
