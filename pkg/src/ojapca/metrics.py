"""Distances between subspaces: canonical angles, sin/tan norms and chart coordinates."""

from __future__ import annotations

from typing import Literal

import numpy as np

from .exceptions import HeadSingular, NotOrthonormal
from .linalg import RANK_TOL, as_matrix

NormKind = Literal["spectral", "frobenius"]

ORTHO_TOL = 1e-8


def _check_orthonormal(X: np.ndarray, name: str) -> None:
    res = np.linalg.norm(X.T @ X - np.eye(X.shape[1]))
    if res > ORTHO_TOL * max(1, X.shape[1]):
        raise NotOrthonormal(f"{name} is not column-orthonormal (residual {res:.3e})")


def principal_angles(X, Y) -> np.ndarray:
    """Canonical angles between ``span(X)`` and ``span(Y)``, nondecreasing.

    ``X`` is d x p and ``Y`` is d x q with p <= q, both column-orthonormal.
    The angles are the arccosines of the singular values of ``X^T Y``; angles
    below pi/4 are taken from the sine side for accuracy.
    """
    X = as_matrix(X, "X")
    Y = as_matrix(Y, "Y")
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"row mismatch: {X.shape} vs {Y.shape}")
    if X.shape[1] > Y.shape[1]:
        raise ValueError("principal_angles expects dim(X) <= dim(Y)")
    _check_orthonormal(X, "X")
    _check_orthonormal(Y, "Y")
    cos = np.clip(np.linalg.svd(X.T @ Y, compute_uv=False), 0.0, 1.0)
    # arccos is ill-conditioned near 0, so small angles come from the sines,
    # the singular values of the part of X orthogonal to span(Y)
    sin = np.clip(np.linalg.svd(X - Y @ (Y.T @ X), compute_uv=False)[::-1], 0.0, 1.0)
    theta = np.where(cos**2 >= 0.5, np.arcsin(sin), np.arccos(cos))
    return np.maximum.accumulate(theta)


def _norm_of(values: np.ndarray, norm_kind: NormKind) -> float:
    if norm_kind == "spectral":
        return float(np.max(values)) if values.size else 0.0
    if norm_kind == "frobenius":
        return float(np.sqrt(np.sum(values**2)))
    raise ValueError(f"unknown norm_kind {norm_kind!r}")


def sin_theta_norm(X, Y, norm_kind: NormKind = "frobenius") -> float:
    return _norm_of(np.sin(principal_angles(X, Y)), norm_kind)


def tan_theta_norm(X, Y, norm_kind: NormKind = "frobenius") -> float:
    """``||tan Theta(X, Y)||``; returns ``inf`` if any angle is a right angle."""
    theta = principal_angles(X, Y)
    cos = np.cos(theta)
    if np.any(cos <= 0.0) or np.any(theta >= np.pi / 2):
        return float("inf")
    return _norm_of(np.sin(theta) / cos, norm_kind)


def scrT(V, q: int | None = None) -> np.ndarray:
    """Chart coordinates ``V[q:] @ inv(V[:p])`` of the span of ``V``.

    With ``q`` omitted (or equal to p) this is the tangent-like map used to
    measure the distance to ``[I_p; 0]``.
    """
    V = as_matrix(V, "V")
    d, p = V.shape
    q = p if q is None else int(q)
    if not p <= q < d:
        raise ValueError(f"need p <= q < d, got p={p}, q={q}, d={d}")
    head = V[:p, :]
    s = np.linalg.svd(head, compute_uv=False)
    if s[0] == 0.0 or s[-1] < RANK_TOL * s[0]:
        raise HeadSingular(f"leading {p}x{p} block is singular (sigma_min={s[-1]:.3e})")
    # X @ inv(H) via a solve on the transposed system
    return np.linalg.solve(head.T, V[q:, :].T).T


def scrT_norm(V, q: int | None = None, norm_kind: NormKind = "frobenius") -> float:
    """Norm of ``scrT(V, q)``, or ``inf`` when the head block is singular."""
    try:
        T = scrT(V, q)
    except HeadSingular:
        return float("inf")
    if norm_kind == "spectral":
        return float(np.linalg.norm(T, 2)) if T.size else 0.0
    return float(np.linalg.norm(T))


def sphere_membership(V, kappa: float) -> bool:
    """Whether the smallest singular value of ``V[:p]`` is at least ``1/sqrt(1+kappa^2)``.

    For column-orthonormal ``V`` this is equivalent to ``||scrT(V)||_2 <= kappa``.
    """
    V = as_matrix(V, "V")
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    _check_orthonormal(V, "V")
    p = V.shape[1]
    smin = np.linalg.svd(V[:p, :], compute_uv=False)[-1]
    # relative slack absorbs rounding at the boundary
    return bool(smin >= (1.0 - 1e-12) / np.sqrt(1.0 + kappa**2))
