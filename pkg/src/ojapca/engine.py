"""Oja's streaming subspace iteration.

One step maps the current orthonormal basis ``U`` and a sample ``x`` to

    z = U^T x,    U~ = U + eta * x z^T,    U' = orthonormalize(U~).

The learning-rate schedule and the orthonormalization strategy are
pluggable. ``run`` drives the iteration over a sample source, records
errors at checkpoints and, optionally, tracks the first-hitting diagnostics
(sphere exit, sphere entry, truncation) when the ground truth is known.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from . import _kernels as K
from .exceptions import BadDims, NonFinite, RankDeficient, StreamExhausted, ValidationError
from .linalg import orthonormality_residual, qr_orthonormalize
from .metrics import principal_angles, scrT_norm
from .samplers import CovSpec, SeedLike, make_rng

# ---------------------------------------------------------------------------
# learning-rate schedules


class Schedule:
    kind: str

    def rates(self, steps) -> np.ndarray:
        raise NotImplementedError

    def rate(self, n: int) -> float:
        if n < 1:
            raise ValueError("step index starts at 1")
        return float(self.rates(np.array([n]))[0])

    def to_dict(self) -> dict:
        return {"kind": self.kind, **asdict(self)}


@dataclass(frozen=True)
class Constant(Schedule):
    eta_o: float
    kind = "constant"

    def __post_init__(self):
        if not self.eta_o > 0:
            raise ValidationError("constant rate must be positive")

    def rates(self, steps):
        return np.full(np.shape(steps), float(self.eta_o))


@dataclass(frozen=True)
class Harmonic(Schedule):
    """``eta_n = c_eta / (gamma_ref * n)``."""

    c_eta: float = 2.0
    gamma_ref: float = 1.0
    kind = "harmonic"

    def __post_init__(self):
        if not (self.c_eta > 0 and self.gamma_ref > 0):
            raise ValidationError("harmonic schedule needs c_eta > 0 and gamma_ref > 0")

    def rates(self, steps):
        return self.c_eta / (self.gamma_ref * np.asarray(steps, dtype=float))


@dataclass(frozen=True)
class TwoPhase(Schedule):
    """Constant cold-start rate for ``n <= n_o``, then harmonic decay.

    The cold-start rate is ``c_o_prime * ln(d / delta) / (gamma_ref * n_o)``.
    """

    n_o: int
    c_o_prime: float = 1.0
    c_eta: float = 2.0
    gamma_ref: float = 1.0
    d: int = 2
    delta: float = 0.1
    kind = "two_phase"

    def __post_init__(self):
        if self.n_o < 1:
            raise ValidationError("n_o must be >= 1")
        if self.c_eta < 1:
            raise ValidationError("two-phase schedule requires c_eta >= 1")
        if not (self.c_o_prime > 0 and self.gamma_ref > 0):
            raise ValidationError("c_o_prime and gamma_ref must be positive")
        if not 0 < self.delta < 1:
            raise ValidationError("delta must lie in (0, 1)")
        if self.d < 1 or math.log(self.d / self.delta) <= 0:
            raise ValidationError("need d / delta > 1 for a positive cold-start rate")

    @property
    def cold_rate(self) -> float:
        return self.c_o_prime * math.log(self.d / self.delta) / (self.gamma_ref * self.n_o)

    def rates(self, steps):
        steps = np.asarray(steps, dtype=float)
        return np.where(
            steps <= self.n_o, self.cold_rate, self.c_eta / (self.gamma_ref * steps)
        )


SCHEDULES = {cls.kind: cls for cls in (Constant, Harmonic, TwoPhase)}


def schedule_from_dict(spec: dict) -> Schedule:
    spec = dict(spec)
    kind = spec.pop("kind")
    try:
        cls = SCHEDULES[kind]
    except KeyError:
        raise ValidationError(f"unknown schedule kind {kind!r}") from None
    return cls(**spec)


def rate(schedule: Schedule, n: int) -> float:
    return schedule.rate(n)


# ---------------------------------------------------------------------------
# normalizers


@dataclass(frozen=True)
class Normalizer:
    kind = "qr"
    mode = K.MODE_QR
    period = 1
    guard = math.inf

    def to_dict(self) -> dict:
        return {"kind": self.kind, **asdict(self)}


@dataclass(frozen=True)
class QR(Normalizer):
    pass


@dataclass(frozen=True)
class Polar(Normalizer):
    kind = "polar"
    mode = K.MODE_POLAR


@dataclass(frozen=True)
class Deferred(Normalizer):
    """Re-orthonormalize (by QR) every ``period`` steps, at the final step of a
    run, and early whenever ``||U~^T U~ - I||_F`` exceeds ``guard``."""

    period: int = 10
    guard: float = 0.1
    kind = "deferred"
    mode = K.MODE_DEFERRED

    def __post_init__(self):
        if self.period < 1:
            raise ValidationError("deferred period must be >= 1")


NORMALIZERS = {"qr": QR, "polar": Polar, "deferred": Deferred}


def normalizer_from_dict(spec: dict | str) -> Normalizer:
    if isinstance(spec, str):
        spec = {"kind": spec}
    spec = dict(spec)
    kind = spec.pop("kind")
    try:
        cls = NORMALIZERS[kind]
    except KeyError:
        raise ValidationError(f"unknown normalizer kind {kind!r}") from None
    return cls(**spec)


# ---------------------------------------------------------------------------
# state and diagnostics


@dataclass
class Diagnostics:
    """Running first-hitting indices for one trajectory.

    ``n_out`` is the first step at which the iterate leaves the region
    ``||T||_2 <= kappa`` after having been inside it; ``n_in`` the first step
    with ``||T||_2 <= epsilon``; ``n_qb`` the first step whose sample breaks
    the truncation bound at level ``mu``.
    """

    kappa: float
    mu: float
    epsilon: float
    in_sphere: bool = False
    qb_triggered: bool = False
    entered: bool = False
    n_out: int | None = None
    n_in: int | None = None
    n_qb: int | None = None

    def _arrays(self):
        hits = np.array(
            [-1 if v is None else v for v in (self.n_out, self.n_in, self.n_qb)], dtype=np.int64
        )
        flags = np.array([self.in_sphere, self.qb_triggered, self.entered], dtype=np.int64)
        return hits, flags

    def _absorb(self, hits, flags):
        self.n_out, self.n_in, self.n_qb = (None if h < 0 else int(h) for h in hits)
        self.in_sphere, self.qb_triggered, self.entered = (bool(f) for f in flags)

    def flags_string(self) -> str:
        tokens = []
        if self.in_sphere:
            tokens.append("in_sphere")
        if self.qb_triggered:
            tokens.append("qb")
        for name in ("n_in", "n_out", "n_qb"):
            v = getattr(self, name)
            if v is not None:
                tokens.append(f"{name}={v}")
        return "|".join(tokens)


@dataclass
class OjaState:
    U: np.ndarray
    n: int = 0
    diagnostics: Diagnostics | None = None

    @property
    def d(self) -> int:
        return self.U.shape[0]

    @property
    def p(self) -> int:
        return self.U.shape[1]

    def copy(self) -> "OjaState":
        diag = None if self.diagnostics is None else replace(self.diagnostics)
        return OjaState(self.U.copy(), self.n, diag)

    def basis(self) -> np.ndarray:
        """Column-orthonormal basis of the current span (re-orthonormalized if needed)."""
        if orthonormality_residual(self.U) <= 1e-10:
            return self.U
        return qr_orthonormalize(self.U)


def init_state(d: int, p: int, seed: SeedLike) -> OjaState:
    """Random start: QR of a d x p standard Gaussian matrix from the seeded generator."""
    if not (isinstance(d, (int, np.integer)) and isinstance(p, (int, np.integer))):
        raise BadDims("d and p must be integers")
    if not 1 <= p < d:
        raise BadDims(f"need 1 <= p < d, got d={d}, p={p}")
    G = make_rng(seed).standard_normal((d, p))
    return OjaState(qr_orthonormalize(G), 0)


def _diag_context(spec: CovSpec | None, diag: Diagnostics | None, p: int):
    d_on = diag is not None and spec is not None
    if spec is None:
        return False, np.eye(1), False, np.zeros(1), 0.0, 0.0, 0.0
    B = np.ascontiguousarray(spec.basis)
    rotated = spec.rotation is not None
    if not d_on:
        return False, B, rotated, np.zeros(spec.d), 0.0, 0.0, 0.0
    mu = diag.mu
    ybound = np.sqrt(spec.lambdas * mu)
    zbound = math.sqrt(spec.lambda_sum(1, p) * mu)
    return True, B, rotated, ybound, zbound, float(diag.kappa), float(diag.epsilon)


def _advance(state: OjaState, X: np.ndarray, etas: np.ndarray, normalizer: Normalizer,
             final_step: int, spec: CovSpec | None) -> None:
    """Run the compiled kernel over a block, mutating ``state`` in place."""
    if not np.all(np.isfinite(X)):
        bad = int(np.argmax(~np.all(np.isfinite(X), axis=1)))
        raise NonFinite(f"non-finite sample at step {state.n + bad + 1}")
    diag = state.diagnostics
    d_on, B, rotated, ybound, zbound, kappa, eps = _diag_context(spec, diag, state.p)
    if diag is not None and d_on:
        hits, flags = diag._arrays()
    else:
        hits, flags = np.full(3, -1, dtype=np.int64), np.zeros(3, dtype=np.int64)
    U = np.ascontiguousarray(state.U, dtype=np.float64)
    if U is state.U:
        U = U.copy()
    done, status = K.oja_block(
        U, np.ascontiguousarray(X, dtype=np.float64), np.ascontiguousarray(etas, dtype=np.float64),
        state.n, normalizer.mode, int(normalizer.period), float(normalizer.guard),
        int(final_step), d_on, B, rotated, ybound, zbound, kappa, eps, hits, flags,
    )
    if status == K.STATUS_NONFINITE:
        raise NonFinite(f"iterate overflowed at step {state.n + done + 1}")
    if status == K.STATUS_RANK:
        raise RankDeficient(f"update lost rank at step {state.n + done + 1}")
    state.U = U
    state.n += done
    if diag is not None and d_on:
        diag._absorb(hits, flags)


def step(state: OjaState, x, eta: float, normalizer: Normalizer | None = None) -> OjaState:
    """One Oja update; returns a new state.

    With a :class:`Deferred` normalizer the returned basis is only
    orthonormal on period boundaries (or when the drift guard fires).
    """
    normalizer = QR() if normalizer is None else normalizer
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if x.shape[1] != state.d:
        raise BadDims(f"sample has length {x.shape[1]}, expected {state.d}")
    if not eta >= 0:
        raise ValueError("learning rate must be nonnegative")
    new = state.copy()
    _advance(new, x, np.array([eta], dtype=float), normalizer, -1, None)
    return new


def start_diagnostics(state: OjaState, spec: CovSpec, mu: float = 9.0, kappa: float = 2.0,
                      epsilon: float = 0.5) -> Diagnostics:
    """Attach a fresh :class:`Diagnostics` evaluated at the current iterate."""
    V = spec.basis.T @ state.U
    tn = K.tnorm2(np.ascontiguousarray(V), state.p)
    diag = Diagnostics(kappa=kappa, mu=mu, epsilon=epsilon)
    diag.in_sphere = bool(tn <= kappa * (1 + 1e-12))
    diag.entered = diag.in_sphere
    if tn <= epsilon:
        diag.n_in = state.n
    state.diagnostics = diag
    return diag


def diagnostics_update(state: OjaState, x, z, cov: CovSpec, mu: float, kappa: float,
                       epsilon: float | None = None) -> Diagnostics:
    """Update ``state.diagnostics`` for the sample ``x`` that produced ``state``.

    ``z`` is the projection of ``x`` onto the previous basis and ``state`` the
    iterate after the update. Mirrors the bookkeeping done inside ``run``.
    """
    diag = state.diagnostics
    if diag is None:
        diag = Diagnostics(kappa=kappa, mu=mu, epsilon=kappa if epsilon is None else epsilon)
        state.diagnostics = diag
    y = cov.basis.T @ np.asarray(x, dtype=float)
    ybound = np.sqrt(cov.lambdas * mu)
    zbound = math.sqrt(cov.lambda_sum(1, state.p) * mu)
    if not K.qb_ok(y, np.asarray(z, dtype=float), ybound, zbound):
        diag.qb_triggered = True
        if diag.n_qb is None:
            diag.n_qb = state.n
    V = np.ascontiguousarray(cov.basis.T @ state.U)
    tn = K.tnorm2(V, state.p)
    inside = bool(tn <= kappa * (1 + 1e-12))
    if inside:
        diag.entered = True
    elif diag.in_sphere and diag.n_out is None:
        diag.n_out = state.n
    diag.in_sphere = inside
    if tn <= diag.epsilon and diag.n_in is None:
        diag.n_in = state.n
    return diag


# ---------------------------------------------------------------------------
# trial records and the driver loop


@dataclass
class TrialRecord:
    seed: int | None
    n: int
    sin2F: float | None = None
    tanF: float | None = None
    tan2: float | None = None
    scrTqF: float | None = None
    flags: str = ""
    n_in: int | None = None
    n_out: int | None = None
    n_qb: int | None = None

    def as_row(self) -> dict:
        return asdict(self)


def measure(U: np.ndarray, spec: CovSpec, q: int | None = None) -> dict:
    """Errors of ``span(U)`` against the top-``q`` eigenspace (``q`` defaults to p)."""
    q = spec.q if q is None else q
    q = U.shape[1] if q is None else q
    Ustar = spec.target_basis(q)
    theta = principal_angles(U, Ustar)
    s = np.sin(theta)
    c = np.cos(theta)
    if np.any(c <= 0):
        tanF = tan2 = math.inf
    else:
        t = s / c
        tanF, tan2 = float(np.sqrt(np.sum(t**2))), float(np.max(t))
    V = spec.basis.T @ U
    return {
        "sin2F": float(np.sum(s**2)),
        "tanF": tanF,
        "tan2": tan2,
        "scrTqF": scrT_norm(V, q, "frobenius"),
    }


class ArraySource:
    """Sequential reader over an in-memory (n, d) array or any iterable of vectors."""

    def __init__(self, data, d: int | None = None):
        if isinstance(data, np.ndarray):
            data = np.atleast_2d(np.asarray(data, dtype=float))
            self._arr, self._it = data, None
            self.d = data.shape[1]
        else:
            self._arr, self._it = None, iter(data)
            self.d = d
        self.position = 0

    def take(self, k: int) -> np.ndarray:
        if self._arr is not None:
            out = self._arr[self.position : self.position + k]
        else:
            rows = [np.asarray(v, dtype=float) for _, v in zip(range(k), self._it)]
            out = np.array(rows, dtype=float) if rows else np.empty((0, self.d or 0))
            if self.d is None and rows:
                self.d = out.shape[1]
        self.position += out.shape[0]
        return out


def _as_source(source):
    # ndarray.take exists but means something else
    if isinstance(source, np.ndarray) or not hasattr(source, "take"):
        return ArraySource(source)
    return source


def run(
    source,
    n_steps: int | None,
    schedule: Schedule,
    normalizer: Normalizer | None = None,
    checkpoints: Iterable[int] = (),
    *,
    state: OjaState | None = None,
    p: int | None = None,
    seed: SeedLike = None,
    spec: CovSpec | None = None,
    diagnostics: dict | None = None,
    callback: Callable[[OjaState, TrialRecord], None] | None = None,
    horizon: int | None = None,
    record_seed: int | None = None,
    chunk: int = 4096,
) -> tuple[OjaState, list[TrialRecord]]:
    """Run ``n_steps`` Oja updates on samples drawn from ``source``.

    With ``n_steps=None`` the source is consumed until it is exhausted and
    the final iterate is always recorded.

    ``source`` is a :class:`~ojapca.samplers.SampleStream`, any object with a
    ``take(k)`` method, or an iterable of vectors. The starting point is
    ``state`` if given, else ``init_state(d, p, seed)``. Checkpoints are
    absolute step indices; at each one a :class:`TrialRecord` is produced
    (with errors when the ground truth ``spec`` is known, taken from
    ``source.spec`` by default) and ``callback(state, record)`` is invoked.

    ``diagnostics`` (a dict with ``mu``, ``kappa``, ``epsilon``) turns on
    first-hitting tracking. ``horizon`` is the step at which a deferred
    normalizer is forced to orthonormalize; it defaults to the last step of
    this call and only needs to be set when a run is split across calls.
    """
    normalizer = QR() if normalizer is None else normalizer
    spec = getattr(source, "spec", None) if spec is None else spec
    source = _as_source(source)
    if state is None:
        d = getattr(source, "d", None) or (spec.d if spec is not None else None)
        p = p if p is not None else (spec.p if spec is not None else None)
        if d is None or p is None:
            raise BadDims("cannot infer d and p; pass state= or p= with a typed source")
        state = init_state(d, p, seed)
    else:
        state = state.copy()
    if diagnostics is not None and spec is not None and state.diagnostics is None:
        start_diagnostics(state, spec, **diagnostics)
    if record_seed is None and isinstance(seed, (int, np.integer)):
        record_seed = int(seed)

    exhaust = n_steps is None
    start = state.n
    stop = math.inf if exhaust else start + int(n_steps)
    if horizon is not None:
        final_step = int(horizon)
    else:
        final_step = -1 if exhaust else stop
    marks = sorted({int(c) for c in checkpoints if start <= int(c) <= stop})
    records: list[TrialRecord] = []

    def record():
        rec = TrialRecord(seed=record_seed, n=state.n)
        if spec is not None:
            for key, val in measure(state.basis(), spec).items():
                setattr(rec, key, val)
        if state.diagnostics is not None:
            dg = state.diagnostics
            rec.flags = dg.flags_string()
            rec.n_in, rec.n_out, rec.n_qb = dg.n_in, dg.n_out, dg.n_qb
        records.append(rec)
        if callback is not None:
            callback(state, rec)

    mi = 0
    if marks and marks[0] == start:
        record()
        mi = 1
    while state.n < stop:
        target = min(stop, state.n + chunk)
        if mi < len(marks):
            target = min(target, marks[mi])
        k = target - state.n
        X = source.take(k)
        if X.shape[0] == 0:
            X = np.empty((0, state.d))
        if X.shape[0] < k:
            if not exhaust:
                raise StreamExhausted(f"source ran dry after {state.n + X.shape[0]} samples")
            if X.shape[0] == 0:
                break
            target = state.n + X.shape[0]
        if X.shape[1] != state.d:
            raise BadDims(f"samples have length {X.shape[1]}, expected {state.d}")
        etas = schedule.rates(np.arange(state.n + 1, target + 1))
        _advance(state, X, etas, normalizer, final_step, spec)
        if mi < len(marks) and state.n == marks[mi]:
            record()
            mi += 1
    if exhaust:
        if normalizer.mode == K.MODE_DEFERRED:
            state.U = state.basis().copy()
        if not records or records[-1].n != state.n:
            record()
    return state, records


def geometric_checkpoints(n_steps: int) -> list[int]:
    """Powers of two up to ``n_steps``, plus 0 and ``n_steps`` itself."""
    marks = {0, n_steps}
    k = 1
    while k < n_steps:
        marks.add(k)
        k *= 2
    return sorted(marks)


# ---------------------------------------------------------------------------
# checkpoint files

CHECKPOINT_FORMAT = "ojapca-checkpoint"


def save_checkpoint(path, state: OjaState, schedule: Schedule, normalizer: Normalizer,
                    seed: int | None) -> Path:
    """Write a JSON checkpoint; floats are written with round-trip precision."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "d": state.d,
        "p": state.p,
        "n": state.n,
        "schedule": schedule.to_dict(),
        "normalizer": normalizer.to_dict(),
        "seed": seed,
        "U": [float(v) for v in np.asarray(state.U).ravel(order="C")],
        "diagnostics": None if state.diagnostics is None else asdict(state.diagnostics),
    }
    path = Path(path)
    path.write_text(json.dumps(payload, indent=1))
    return path


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(state, schedule, normalizer, seed)``."""
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValidationError(f"{path} is not an ojapca checkpoint")
    d, p = int(payload["d"]), int(payload["p"])
    U = np.array(payload["U"], dtype=np.float64)
    if U.size != d * p:
        raise ValidationError("checkpoint U has the wrong number of entries")
    diag = payload.get("diagnostics")
    state = OjaState(U.reshape(d, p), int(payload["n"]),
                     None if diag is None else Diagnostics(**diag))
    return (
        state,
        schedule_from_dict(payload["schedule"]),
        normalizer_from_dict(payload["normalizer"]),
        payload.get("seed"),
    )
