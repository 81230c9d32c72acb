"""Offline PCA baseline and closed-form rate quantities.

Everything here is a deterministic function of the spectrum and the
learning-rate schedule: the rate constant ``phi`` (and its gap-free
variant), the minimax lower bound, the entrywise contraction operator of
the error recursion, the accumulated products ``F_star``/``F_D`` and the
deterministic envelope for the second moment of the chart coordinates.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .engine import Schedule
from .exceptions import DegenerateSpectrum, GapViolation, StepTooLarge, ThresholdOutOfRange
from .linalg import sym_eig


def _spectrum(lambdas) -> np.ndarray:
    lam = np.asarray(lambdas, dtype=float)
    if lam.ndim != 1 or lam.size < 2:
        raise ValueError("lambdas must be a 1-D sequence of length >= 2")
    if np.any(np.diff(lam) > 0):
        raise ValueError("lambdas must be nonincreasing")
    return lam


def offline_pca(samples, p: int) -> np.ndarray:
    """Top-``p`` eigenvectors of the empirical second-moment matrix ``X^T X / n``.

    Each column's sign is fixed so its largest-magnitude entry is positive.
    """
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    n, d = X.shape
    if n < 1:
        raise ValueError("need at least one sample")
    if not 1 <= p <= d:
        raise ValueError(f"need 1 <= p <= d, got p={p}, d={d}")
    vals, vecs = sym_eig(X.T @ X / n)
    if p < d and vals[p - 1] - vals[p] < 1e-12:
        warnings.warn(
            f"empirical eigengap at rank {p} is {vals[p - 1] - vals[p]:.3e}",
            DegenerateSpectrum,
            stacklevel=2,
        )
    U = vecs[:, :p]
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(p)])
    signs[signs == 0] = 1.0
    return U * signs


class PhiValue(NamedTuple):
    value: float
    bound: float


def _phi_sum(lam: np.ndarray, p: int, q: int) -> float:
    top = lam[:p][None, :]
    tail = lam[q:][:, None]
    gaps = top - tail
    if np.any(gaps <= 0):
        raise GapViolation("phi needs lambda_j > lambda_{q+i} for every summed pair")
    return float(np.sum(tail * top / gaps))


def phi(lambdas, p: int) -> PhiValue:
    """Rate constant ``(1/gamma) sum_{i,j} lambda_{p+i} lambda_j / (lambda_j - lambda_{p+i})``.

    Also returns the bound ``p (d-p) lambda_p lambda_{p+1} / gamma^2``.
    """
    lam = _spectrum(lambdas)
    d = lam.size
    gamma = lam[p - 1] - lam[p]
    if not gamma > 0:
        raise GapViolation(f"eigengap lambda_{p} - lambda_{p + 1} = {gamma} is not positive")
    value = _phi_sum(lam, p, p) / gamma
    bound = p * (d - p) * lam[p - 1] * lam[p] / gamma**2
    return PhiValue(value, float(bound))


def check_gamma_tilde(lambdas, p: int, q: int, gamma_tilde: float) -> None:
    """Raise unless ``lambda_p - lambda_q < gamma_tilde <= lambda_p - lambda_{q+1}``."""
    lam = _spectrum(lambdas)
    if not p <= q < lam.size:
        raise ThresholdOutOfRange(f"need p <= q < d, got p={p}, q={q}")
    lo = lam[p - 1] - lam[q - 1]
    hi = lam[p - 1] - lam[q]
    if not lo < gamma_tilde <= hi:
        raise ThresholdOutOfRange(
            f"gamma_tilde={gamma_tilde} outside ({lo}, {hi}] for p={p}, q={q}"
        )


def phi_gap_free(lambdas, p: int, q: int, gamma_tilde: float) -> PhiValue:
    """Gap-free rate constant, summing over the tail below ``q`` and dividing by ``gamma_tilde``.

    The bound is ``p (d-q) lambda_p (lambda_p - gamma_tilde) / gamma_tilde^2``.
    """
    lam = _spectrum(lambdas)
    check_gamma_tilde(lam, p, q, gamma_tilde)
    d = lam.size
    value = _phi_sum(lam, p, q) / gamma_tilde
    # at the upper end lambda_p - gamma_tilde is lambda_{q+1}; use it directly so
    # that q = p, gamma_tilde = gamma reproduces phi() bit for bit
    rest = lam[q] if gamma_tilde == lam[p - 1] - lam[q] else lam[p - 1] - gamma_tilde
    bound = p * (d - q) * lam[p - 1] * rest / gamma_tilde**2
    return PhiValue(value, float(bound))


def sigma_star_sq(lambdas, p: int, q: int | None = None) -> float:
    """Effective noise variance ``lambda_p lambda_{q+1} / (lambda_p - lambda_{q+1})^2``."""
    lam = _spectrum(lambdas)
    q = p if q is None else q
    gap = lam[p - 1] - lam[q]
    if not gap > 0:
        raise GapViolation(f"lambda_{p} = lambda_{q + 1}: no separation for the lower bound")
    return float(lam[p - 1] * lam[q] / gap**2)


def minimax_lower_bound(lambdas, p: int, q: int | None, n: int, c: float = 1.0) -> float:
    """``c sigma_*^2 p (d - q) / n``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    lam = _spectrum(lambdas)
    q = p if q is None else q
    return c * sigma_star_sq(lam, p, q) * p * (lam.size - q) / n


# ---------------------------------------------------------------------------
# contraction operator and accumulated products


def _gap(lambdas, p):
    lam = _spectrum(lambdas)
    return lam, float(lam[p - 1] - lam[p])


def L_matrix(eta: float, lambdas, p: int) -> np.ndarray:
    """Entries ``1 + eta (lambda_{p+i} - lambda_j)``, shape (d-p, p)."""
    lam, gamma = _gap(lambdas, p)
    if eta * gamma >= 1:
        raise StepTooLarge(f"eta * gamma = {eta * gamma} >= 1")
    return 1.0 + eta * (lam[p:][:, None] - lam[:p][None, :])


def L_apply(T, eta: float, lambdas, p: int) -> np.ndarray:
    """Apply ``T -> T + eta (tail Lambda) T - eta T (head Lambda)``, an entrywise product."""
    L = L_matrix(eta, lambdas, p)
    T = np.asarray(T, dtype=float)
    if T.shape != L.shape:
        raise ValueError(f"T has shape {T.shape}, expected {L.shape}")
    return L * T


def L_norm(eta: float, lambdas, p: int) -> float:
    """Operator norm of the contraction, ``1 - eta * gamma``.

    This is the largest entry of :func:`L_matrix`, hence the norm of the
    entrywise map, as long as every entry is nonnegative, i.e.
    ``eta * (lambda_1 - lambda_d) <= 1``.
    """
    lam, gamma = _gap(lambdas, p)
    if eta * gamma >= 1:
        raise StepTooLarge(f"eta * gamma = {eta * gamma} >= 1")
    return 1.0 - eta * gamma


def _suffix_products(f: np.ndarray) -> np.ndarray:
    """``S[t] = prod(f[t+1:])`` along axis 0 (empty product is 1)."""
    if f.shape[0] == 0:
        return np.ones_like(f)
    C = np.cumprod(f[::-1], axis=0)[::-1]
    return np.concatenate([C[1:], np.ones_like(f[:1])], axis=0)


def F_star(schedule: Schedule, gamma: float, n_prime: int, n: int) -> float:
    """``prod_{r=n'}^{n} (1 - eta_r gamma)``; 1 when ``n' > n``."""
    if n_prime > n:
        return 1.0
    eta = schedule.rates(np.arange(max(n_prime, 1), n + 1))
    return float(np.prod(1.0 - eta * gamma))


def F_D(schedule: Schedule, gamma: float, i: int, j: int, n_prime: int, n: int) -> float:
    """``sum_{s=n'}^{n} eta_s^i prod_{r=s+1}^{n} (1 - eta_r gamma)^j``."""
    if n_prime > n:
        return 0.0
    eta = schedule.rates(np.arange(max(n_prime, 1), n + 1))
    S = _suffix_products((1.0 - eta * gamma) ** j)
    return float(np.sum(eta**i * S))


def hadamard_bound_trajectory(lambdas, p: int, schedule: Schedule, H_scale: float, n: int,
                              T0, start: int = 0) -> np.ndarray:
    """Deterministic envelope for the entrywise second moment ``E[T o T]`` at step ``n``.

    ``prod_r L_r^2 o T0 o T0 + 2 sum_s eta_s^2 prod_{r>s} L_r^2 o (H_scale * H)``
    with ``H_ij = lambda_{p+i} lambda_j`` and ``r, s`` running over
    ``start+1 .. n``. The remainder term is not included; see
    :func:`remainder_term`.
    """
    lam = _spectrum(lambdas)
    T0 = np.asarray(T0, dtype=float)
    D = lam[p:][:, None] - lam[:p][None, :]
    if T0.shape != D.shape:
        raise ValueError(f"T0 has shape {T0.shape}, expected {D.shape}")
    A0 = T0 * T0
    if n <= start:
        return A0
    H = lam[p:][:, None] * lam[:p][None, :]
    eta = schedule.rates(np.arange(start + 1, n + 1))
    L2 = (1.0 + eta[:, None, None] * D[None]) ** 2
    S = _suffix_products(L2)
    drift = np.prod(L2, axis=0) * A0
    noise = 2.0 * H_scale * H * np.sum((eta**2)[:, None, None] * S, axis=0)
    return drift + noise


def remainder_term(C_R: float, epsilon: float, n: int, d: int, delta1: float) -> float:
    """Spectral-norm size ``C_R eps^2 / ln(n d / delta1)`` of the remainder matrix."""
    return C_R * epsilon**2 / math.log(n * d / delta1)


def N_o_formula(p: int, B: float, delta: float, gamma: float, d: int, C_o: float = 1.0) -> int:
    """Cold-start budget ``ceil(C_o p B^2 / (delta^2 gamma^2) * ln(d B / (delta gamma))^4)``."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if min(p, B, gamma, d, C_o) <= 0:
        raise ValueError("all inputs must be positive")
    val = C_o * p * B**2 / (delta**2 * gamma**2) * math.log(d * B / (delta * gamma)) ** 4
    return int(math.ceil(val))


def default_B(lambdas, mu: float = 9.0) -> float:
    """Truncation-level proxy ``lambda_{1..d} * mu`` for the sample bound."""
    return float(np.sum(_spectrum(lambdas)) * mu)


@dataclass
class RateConstants:
    gamma: float
    gamma_tilde: float | None
    phi: float
    phi_upper: float
    minimax: float | None
    sigma_star_sq: float
    n: int | None = None
    c: float = 1.0

    def to_dict(self) -> dict:
        return asdict(self)


def rate_constants(lambdas, p: int, q: int | None = None, gamma_tilde: float | None = None,
                   n: int | None = None, c: float = 1.0) -> RateConstants:
    """Collect the constants relevant to one spectrum (gap-free when ``q`` is given)."""
    lam = _spectrum(lambdas)
    gamma = float(lam[p - 1] - lam[p])
    if q is None or (q == p and gamma_tilde is None):
        ph = phi(lam, p)
        qq = p
    else:
        gt = gamma if gamma_tilde is None else gamma_tilde
        ph = phi_gap_free(lam, p, q, gt)
        qq = q
    return RateConstants(
        gamma=gamma,
        gamma_tilde=gamma_tilde,
        phi=ph.value,
        phi_upper=ph.bound,
        minimax=None if n is None else minimax_lower_bound(lam, p, qq, n, c),
        sigma_star_sq=sigma_star_sq(lam, p, qq),
        n=n,
        c=c,
    )
