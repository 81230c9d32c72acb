"""scikit-learn compatible front end for the streaming engine."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .engine import (
    Constant,
    Deferred,
    Harmonic,
    OjaState,
    Polar,
    QR,
    TwoPhase,
    init_state,
    run,
)


class OjaPCA(TransformerMixin, BaseEstimator):
    """Principal subspace estimated by a single pass of Oja's iteration.

    Rows of ``X`` are treated as a stream of centered samples; ``fit`` starts
    from a random orthonormal basis and ``partial_fit`` continues the same
    trajectory, so ``fit(X)`` equals ``partial_fit`` over any split of ``X``
    (deferred normalization excepted, which orthonormalizes at the end of
    every call).

    Parameters
    ----------
    n_components : int
        Subspace dimension p.
    schedule : {"harmonic", "constant", "two_phase"}
        Learning-rate rule. ``harmonic`` uses ``c_eta / (gamma_ref * n)``,
        ``constant`` uses ``eta``, ``two_phase`` holds a cold-start rate for
        ``n_o`` steps and then decays harmonically.
    normalizer : {"qr", "polar", "deferred"}
        Re-orthonormalization strategy; ``period`` applies to ``deferred``.
    random_state : int, SeedSequence or None
        Seed of the random initial basis.

    Attributes
    ----------
    components_ : ndarray of shape (n_components, n_features)
    n_samples_seen_ : int
    state_ : OjaState
    """

    def __init__(
        self,
        n_components=1,
        *,
        schedule="harmonic",
        c_eta=2.0,
        gamma_ref=1.0,
        eta=0.01,
        n_o=100,
        c_o_prime=1.0,
        delta=0.1,
        normalizer="qr",
        period=10,
        random_state=None,
    ):
        self.n_components = n_components
        self.schedule = schedule
        self.c_eta = c_eta
        self.gamma_ref = gamma_ref
        self.eta = eta
        self.n_o = n_o
        self.c_o_prime = c_o_prime
        self.delta = delta
        self.normalizer = normalizer
        self.period = period
        self.random_state = random_state

    def _schedule(self, d):
        if self.schedule == "harmonic":
            return Harmonic(self.c_eta, self.gamma_ref)
        if self.schedule == "constant":
            return Constant(self.eta)
        if self.schedule == "two_phase":
            return TwoPhase(self.n_o, self.c_o_prime, self.c_eta, self.gamma_ref, d, self.delta)
        raise ValueError(f"unknown schedule {self.schedule!r}")

    def _normalizer(self):
        if self.normalizer == "qr":
            return QR()
        if self.normalizer == "polar":
            return Polar()
        if self.normalizer == "deferred":
            return Deferred(period=self.period)
        raise ValueError(f"unknown normalizer {self.normalizer!r}")

    def fit(self, X, y=None):
        for attr in ("state_", "components_", "n_samples_seen_"):
            if hasattr(self, attr):
                delattr(self, attr)
        return self.partial_fit(X, y)

    def partial_fit(self, X, y=None):
        first = not hasattr(self, "state_")
        X = validate_data(self, X, reset=first, dtype=np.float64, ensure_min_samples=1)
        d = X.shape[1]
        if first:
            if not 1 <= self.n_components < d:
                raise ValueError(
                    f"n_components={self.n_components} must be in [1, n_features - 1]"
                )
            self.state_ = init_state(d, int(self.n_components), self.random_state)
        state, _ = run(X, X.shape[0], self._schedule(d), self._normalizer(), state=self.state_)
        self.state_: OjaState = state
        self.components_ = state.basis().T.copy()
        self.n_samples_seen_ = state.n
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = validate_data(self, X, reset=False, dtype=np.float64)
        return X @ self.components_.T

    def inverse_transform(self, Z):
        check_is_fitted(self, "components_")
        return np.asarray(Z, dtype=float) @ self.components_
