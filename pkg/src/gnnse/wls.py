"""Linear weighted least-squares state estimation from PMU phasors."""
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.sparse import issparse

from .errors import SingularityError
from .powerflow import StateVector


@dataclass(frozen=True)
class WlsSolution:
    state: StateVector
    residual_norm: float
    condition_estimate: float


def _dense(H):
    return H.toarray() if issparse(H) else np.asarray(H, dtype=float)


def solve_wls(H, R, z):
    """Minimise (z - Hx)^T R^-1 (z - Hx) by pivoted QR of R^{-1/2} H.

    ``R`` is the vector of measurement variances. Raises
    :class:`SingularityError` when the gain matrix is rank deficient.
    """
    H = _dense(H)
    R = np.asarray(R, dtype=float)
    z = np.asarray(z, dtype=float)
    k, ncol = H.shape
    if ncol % 2:
        raise ValueError("H must have 2n columns")
    if R.shape != (k,) or z.shape != (k,):
        raise ValueError("R and z must have one entry per row of H")
    if np.any(R <= 0):
        raise ValueError("variances must be positive")
    w = 1.0 / np.sqrt(R)
    A = H * w[:, None]
    b = z * w
    if k < ncol:
        raise SingularityError("system is underdetermined", rank=_qr_rank(A), expected=ncol)
    Q, Rq, piv = scipy.linalg.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(Rq))
    tol = max(k, ncol) * np.finfo(float).eps * diag[0] if diag.size else 0.0
    rank = int(np.count_nonzero(diag > tol))
    if rank < ncol:
        raise SingularityError("gain matrix is singular (unobservable system)",
                               rank=rank, expected=ncol)
    y = scipy.linalg.solve_triangular(Rq, Q.T @ b)
    x = np.empty(ncol)
    x[piv] = y
    resid = float(np.linalg.norm(A @ x - b))
    return WlsSolution(StateVector.from_vector(x), resid, float(diag[0] / diag[-1]))


def _qr_rank(A, rtol=None):
    if A.size == 0:
        return 0
    Rq = scipy.linalg.qr(A, mode="r", pivoting=True)[0]
    diag = np.abs(np.diag(Rq))
    if rtol is None:
        rtol = max(A.shape) * np.finfo(float).eps
    return int(np.count_nonzero(diag > rtol * diag[0])) if diag.size and diag[0] > 0 else 0


def observability_rank(H):
    """``(rank, observable)`` via pivoted QR, tolerance 1e-8 * ||H||_2."""
    H = _dense(H)
    ncol = H.shape[1]
    if H.shape[0] == 0 or not np.any(H):
        return 0, ncol == 0
    norm = np.linalg.norm(H, 2)
    Rq = scipy.linalg.qr(H, mode="r", pivoting=True)[0]
    rank = int(np.count_nonzero(np.abs(np.diag(Rq)) > 1e-8 * norm))
    return rank, rank == ncol
