"""Dense linear algebra for small and moderate matrices.

The orthonormalization routines are compiled with numba so the streaming
engine can call the exact same code inside its inner loop; the public
wrappers add validation and error reporting.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .exceptions import NoConvergence, NotSymmetric, RankDeficient

RANK_TOL = 1e-12
SYMMETRY_TOL = 1e-10


def as_matrix(A, name: str = "A") -> np.ndarray:
    """Return ``A`` as a finite 2-D float64 array."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] == 0 or A.shape[1] == 0:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains NaN or Inf")
    return A


@njit(cache=True, nogil=True)
def _qr_positive(A):
    """Gram-Schmidt with one re-orthogonalization pass (CGS2).

    Returns ``(Q, pivots)``; the implied R factor has diagonal ``pivots``,
    which is nonnegative by construction.
    """
    d, p = A.shape
    Q = np.empty((d, p))
    piv = np.empty(p)
    v = np.empty(d)
    for j in range(p):
        for k in range(d):
            v[k] = A[k, j]
        for _ in range(2):
            for i in range(j):
                c = 0.0
                for k in range(d):
                    c += Q[k, i] * v[k]
                for k in range(d):
                    v[k] -= c * Q[k, i]
        nrm = 0.0
        for k in range(d):
            nrm += v[k] * v[k]
        nrm = np.sqrt(nrm)
        piv[j] = nrm
        if nrm > 0.0:
            for k in range(d):
                Q[k, j] = v[k] / nrm
        else:
            for k in range(d):
                Q[k, j] = 0.0
    return Q, piv


@njit(cache=True, nogil=True)
def _polar(A):
    """Orthonormal polar factor ``U V^T`` and the singular values of ``A``."""
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    return U @ Vt, s


@njit(cache=True, nogil=True)
def _rank_ok(piv, tol):
    top = 0.0
    for v in piv:
        if v > top:
            top = v
    if not top > 0.0:
        return False
    for v in piv:
        if v < tol * top:
            return False
    return True


def qr_orthonormalize(A) -> np.ndarray:
    """Orthonormal basis of ``span(A)`` with the sign fixed so that R has a positive diagonal.

    Raises RankDeficient when a pivot falls below ``RANK_TOL`` times the largest pivot.
    """
    A = as_matrix(A)
    d, p = A.shape
    if d < p:
        raise ValueError(f"need rows >= cols, got {A.shape}")
    Q, piv = _qr_positive(np.ascontiguousarray(A))
    if not _rank_ok(piv, RANK_TOL):
        raise RankDeficient(f"pivots {piv} below relative tolerance {RANK_TOL}")
    return Q


def polar_orthonormalize(A) -> np.ndarray:
    """Closest column-orthonormal matrix to ``A`` in Frobenius norm, ``A (A^T A)^{-1/2}``."""
    A = as_matrix(A)
    d, p = A.shape
    if d < p:
        raise ValueError(f"need rows >= cols, got {A.shape}")
    try:
        P, s = _polar(np.ascontiguousarray(A))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NoConvergence(str(exc)) from exc
    if not _rank_ok(s, RANK_TOL):
        raise RankDeficient(f"singular values {s} below relative tolerance {RANK_TOL}")
    return P


def svd(A):
    """Thin SVD ``A = U diag(s) V^T`` with ``s`` descending; returns ``(U, s, V)``."""
    A = as_matrix(A)
    try:
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    return U, s, Vt.T


def sym_eig(S):
    """Eigen-decomposition of a symmetric matrix, eigenvalues in descending order."""
    S = as_matrix(S, "S")
    n, m = S.shape
    if n != m:
        raise NotSymmetric(f"matrix is not square: {S.shape}")
    scale = np.linalg.norm(S)
    if np.linalg.norm(S - S.T) > SYMMETRY_TOL * max(scale, np.finfo(float).tiny):
        raise NotSymmetric("matrix is not symmetric within tolerance")
    try:
        vals, vecs = np.linalg.eigh(0.5 * (S + S.T))
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NoConvergence(str(exc)) from exc
    return vals[::-1].copy(), vecs[:, ::-1].copy()


def orthonormality_residual(Q) -> float:
    """``||Q^T Q - I||_F``."""
    Q = np.asarray(Q, dtype=float)
    return float(np.linalg.norm(Q.T @ Q - np.eye(Q.shape[1])))
