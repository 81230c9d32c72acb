"""Compiled inner loops of the Oja iteration.

Everything here is nopython numba so that a block of samples is processed
without returning to the interpreter. Status codes returned by
:func:`oja_block`: 0 ok, 1 non-finite iterate, 2 rank loss.
"""

import numpy as np
from numba import njit

from .linalg import RANK_TOL, _polar, _qr_positive, _rank_ok

MODE_QR = 0
MODE_POLAR = 1
MODE_DEFERRED = 2

STATUS_OK = 0
STATUS_NONFINITE = 1
STATUS_RANK = 2

# indices into the hits / flags arrays
HIT_OUT, HIT_IN, HIT_QB = 0, 1, 2
FLAG_IN, FLAG_QB, FLAG_ENTERED = 0, 1, 2


@njit(cache=True, nogil=True)
def tnorm2(V, p):
    """Spectral norm of ``V[p:] @ inv(V[:p])``; ``inf`` if the head is singular."""
    d = V.shape[0]
    if p == 1:
        h = abs(V[0, 0])
        s = 0.0
        for i in range(1, d):
            s += V[i, 0] * V[i, 0]
        if h <= RANK_TOL * np.sqrt(s + h * h):
            return np.inf
        return np.sqrt(s) / h
    if p == 2:
        a, b, c, e = V[0, 0], V[0, 1], V[1, 0], V[1, 1]
        det = a * e - b * c
        fro = np.sqrt(a * a + b * b + c * c + e * e)
        if abs(det) <= RANK_TOL * fro * fro:
            return np.inf
        # inv(head) = [[e, -b], [-c, a]] / det ; accumulate G = T^T T
        g00 = 0.0
        g01 = 0.0
        g11 = 0.0
        for i in range(2, d):
            t0 = (V[i, 0] * e - V[i, 1] * c) / det
            t1 = (-V[i, 0] * b + V[i, 1] * a) / det
            g00 += t0 * t0
            g01 += t0 * t1
            g11 += t1 * t1
        tr = 0.5 * (g00 + g11)
        disc = np.sqrt(0.25 * (g00 - g11) ** 2 + g01 * g01)
        return np.sqrt(tr + disc)
    head = np.ascontiguousarray(V[:p, :])
    U, s, Vt = np.linalg.svd(head)
    if s[0] == 0.0 or s[p - 1] < RANK_TOL * s[0]:
        return np.inf
    inv = (Vt.T / s) @ U.T
    T = np.ascontiguousarray(V[p:, :]) @ inv
    return np.linalg.svd(T)[1][0]


@njit(cache=True, nogil=True)
def qb_ok(y, z, ybound, zbound):
    """Truncation test: every ``|y_i| <= ybound_i`` and ``||z|| <= zbound``."""
    for i in range(y.shape[0]):
        if abs(y[i]) > ybound[i]:
            return False
    s = 0.0
    for j in range(z.shape[0]):
        s += z[j] * z[j]
    return np.sqrt(s) <= zbound


@njit(cache=True, nogil=True)
def gram_deviation(U):
    """``||U^T U - I||_F``."""
    d, p = U.shape
    acc = 0.0
    for a in range(p):
        for b in range(p):
            s = 0.0
            for i in range(d):
                s += U[i, a] * U[i, b]
            if a == b:
                s -= 1.0
            acc += s * s
    return np.sqrt(acc)


@njit(cache=True, nogil=True)
def oja_block(
    U, X, etas, n0, mode, period, guard, final_step,
    diag_on, B, rotated, ybound, zbound, kappa, eps, hits, flags,
):
    """Apply ``len(X)`` Oja updates to ``U`` in place.

    Returns ``(steps_done, status)``. Step numbers are ``n0 + 1, n0 + 2, ...``.
    """
    d, p = U.shape
    k = X.shape[0]
    z = np.empty(p)
    for t in range(k):
        n = n0 + t + 1
        eta = etas[t]
        for j in range(p):
            s = 0.0
            for i in range(d):
                s += U[i, j] * X[t, i]
            z[j] = s

        if diag_on:
            if rotated:
                y = B.T @ X[t]
            else:
                y = X[t].copy()
            if not qb_ok(y, z, ybound, zbound):
                flags[FLAG_QB] = 1
                if hits[HIT_QB] < 0:
                    hits[HIT_QB] = n

        # eta = 0 or z = 0 leaves U untouched; skip the re-orthonormalization
        # so that such steps are exact no-ops
        moved = eta != 0.0
        if moved:
            moved = False
            for j in range(p):
                if z[j] != 0.0:
                    moved = True
                    break

        finite = True
        for i in range(d):
            xi = eta * X[t, i]
            for j in range(p):
                U[i, j] += xi * z[j]
                if not np.isfinite(U[i, j]):
                    finite = False
        if not finite:
            return t, STATUS_NONFINITE

        if not moved and mode != MODE_DEFERRED:
            pass
        elif mode == MODE_POLAR:
            P, sv = _polar(U)
            if not _rank_ok(sv, RANK_TOL):
                return t, STATUS_RANK
            U[:, :] = P
        elif mode == MODE_QR or (
            n % period == 0 or n == final_step or gram_deviation(U) > guard
        ):
            Q, piv = _qr_positive(U)
            if not _rank_ok(piv, RANK_TOL):
                return t, STATUS_RANK
            U[:, :] = Q

        if diag_on:
            if rotated:
                V = B.T @ U
            else:
                V = U
            tn = tnorm2(V, p)
            inside = tn <= kappa * (1.0 + 1e-12)
            if inside:
                flags[FLAG_ENTERED] = 1
            elif flags[FLAG_IN] == 1 and hits[HIT_OUT] < 0:
                hits[HIT_OUT] = n
            flags[FLAG_IN] = 1 if inside else 0
            if tn <= eps and hits[HIT_IN] < 0:
                hits[HIT_IN] = n
    return k, STATUS_OK
