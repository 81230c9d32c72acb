"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py`` (the lines appear in the terminal
summary) or ``python tests/test_acceptance.py``.
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from ojapca.engine import QR, Deferred, Harmonic, OjaState, Polar, TwoPhase, init_state, run
from ojapca.exceptions import ValidationError
from ojapca.harness.config import build_config
from ojapca.harness.experiment import (
    compare_online_offline,
    empirical_second_moment,
    fit_rate,
    run_experiment,
)
from ojapca.metrics import principal_angles, scrT, scrT_norm, tan_theta_norm
from ojapca.samplers import make_spec, stream
from ojapca.theory import (
    F_D,
    F_star,
    L_matrix,
    L_norm,
    hadamard_bound_trajectory,
    phi,
    phi_gap_free,
    remainder_term,
)

RESULTS = []  # (criterion, passed, detail), printed by conftest's terminal summary

ENV = {}

C3 = {
    "lambdas": [4, 3, 1, 1, 1, 1, 1, 1, 1, 1],
    "p": 2,
    "schedule": {"kind": "two_phase", "n_o": 500, "c_eta": 2.0},
    "n_steps": 100_000,
    "R": 200,
    "checkpoints": [0, 500, 1000, 10_000, 100_000],
    "diagnostics": True,
}


def report(num, passed, detail, started):
    line = f"{'PASS' if passed else 'FAIL'} criterion {num}: {detail} ({time.time() - started:.1f}s)"
    RESULTS.append(line)
    print(line)
    assert passed, line


@pytest.fixture(scope="module")
def criterion3_run():
    cfg = build_config(C3, env=ENV)
    started = time.time()
    res = run_experiment(cfg, capture_T=True)
    return cfg, res, time.time() - started


def _chart(U, p):
    return scrT(U, p)


# 1 -----------------------------------------------------------------------------


def test_criterion_1_normalizer_invariance():
    started = time.time()
    worst, compared = 0.0, 0
    cases = [(d, p) for d in (4, 10) for p in (1, 3)]
    for k in range(100):
        d, p = cases[k % 4]
        lam = np.linspace(2.0 * d, 1.0, d)
        spec = make_spec(lam, p, rotation_seed=k)
        X = stream(spec, 1000 + k, 500).take(500)
        sched = Harmonic(2.0, spec.gamma)
        seqs = []
        for nrm in (QR(), Polar(), Deferred(period=10)):
            Ts = []
            run(X, 500, sched, nrm, range(501), state=init_state(d, p, k), spec=spec,
                callback=lambda s, r: Ts.append(_chart(spec.basis.T @ s.U, p)))
            seqs.append(Ts)
        for t in range(501):
            ref = seqs[0][t]
            if np.linalg.norm(ref, 2) > 10:
                continue
            for other in seqs[1:]:
                worst = max(worst, np.linalg.norm(other[t] - ref) / np.linalg.norm(ref))
                compared += 1
    report(1, worst <= 1e-8 and compared > 0,
           f"max relative Frobenius gap of T across QR/Polar/Deferred(10) = {worst:.2e} "
           f"over {compared} comparisons (tol 1e-8)", started)


# 2 -----------------------------------------------------------------------------


def test_criterion_2_tan_equals_chart_norm():
    started = time.time()
    rng = np.random.default_rng(2)
    worst_eq, worst_ineq = 0.0, -math.inf
    for _ in range(1000):
        d = int(rng.integers(2, 21))
        p = int(rng.integers(1, min(5, d - 1) + 1))
        V, _ = np.linalg.qr(rng.standard_normal((d, p)))
        for kind in ("spectral", "frobenius"):
            a = tan_theta_norm(V, np.eye(d)[:, :p], kind)
            b = scrT_norm(V, p, kind)
            worst_eq = max(worst_eq, abs(a - b) / b)
            if d - p >= 2:
                q = int(rng.integers(p + 1, d))
                gap = tan_theta_norm(V, np.eye(d)[:, :q], kind) - scrT_norm(V, q, kind)
                worst_ineq = max(worst_ineq, gap)
    report(2, worst_eq <= 1e-9 and worst_ineq <= 1e-9,
           f"p=q max relative gap {worst_eq:.1e} (tol 1e-9); p<q max excess {worst_ineq:.1e}",
           started)


# 3 -----------------------------------------------------------------------------


def test_criterion_3_one_over_n_rate(criterion3_run):
    cfg, res, elapsed = criterion3_run
    started = time.time() - elapsed
    stats = {r["n"]: r["sin2F"]["mean"] for r in res.summary["checkpoints"]}
    ns = [1000, 10_000, 100_000]
    ph = phi(cfg.spec.lambdas, cfg.p).value
    fit = fit_rate(ns, [stats[n] for n in ns], ph)
    ok = -1.25 <= fit.slope <= -0.80 and 0.01 <= fit.empirical_constant <= 100
    report(3, ok and elapsed < 600,
           f"slope {fit.slope:.3f} in [-1.25,-0.80], n*err/phi at 1e5 = "
           f"{fit.empirical_constant:.3f} in [0.01,100], r2 {fit.r_squared:.4f}", started)


# 4 -----------------------------------------------------------------------------


def _gap_free_slope(raw):
    cfg = build_config(raw, env=ENV)
    res = run_experiment(cfg, capture_T=False)
    ns = [1000, 10_000, 100_000]
    by_n = {r["n"]: r for r in res.summary["checkpoints"]}
    mean_fit = fit_rate(ns, [by_n[n]["scrTq2"]["mean"] for n in ns])
    sin_fit = fit_rate(ns, [by_n[n]["sin2F"]["mean"] for n in ns])
    return cfg, mean_fit, sin_fit


def test_criterion_4_gap_free():
    started = time.time()
    base = {"n_steps": 100_000, "R": 100, "checkpoints": [0, 1000, 10_000, 100_000]}
    # gamma_tilde = 1 sits on the open end of (lambda_1 - lambda_3, lambda_1 - lambda_4] = (1, 2]
    with pytest.raises(ValidationError):
        build_config({"lambdas": [3, 2, 2, 1, 1, 1], "p": 1, "q": 3, "gamma_tilde": 1.0, **base},
                     env=ENV)
    # the schedule runs at the stated rate scale 1 (= lambda_1 - lambda_2); phi uses the
    # admissible gamma_tilde = 2
    _, fit_a, _ = _gap_free_slope({"lambdas": [3, 2, 2, 1, 1, 1], "p": 1, "q": 3,
                                   "schedule": {"kind": "harmonic", "gamma_ref": 1.0}, **base})
    cfg_b, fit_b, sin_b = _gap_free_slope({"lambdas": [3, 3, 1, 1, 1, 1], "p": 1, "q": 2, **base})
    assert cfg_b.spec.gamma == 0.0
    ok = -1.25 <= fit_a.slope <= -0.75 and fit_b.slope <= -0.75
    report(4, ok,
           f"[3,2,2,1,1,1] q=3 slope {fit_a.slope:.3f} in [-1.25,-0.75]; zero-gap [3,3,1,1,1,1] "
           f"q=2 slope {fit_b.slope:.3f} <= -0.75 (sin^2 vs top-q slope {sin_b.slope:.3f})",
           started)


# 5 -----------------------------------------------------------------------------


def test_criterion_5_online_matches_offline():
    started = time.time()
    raw = {**C3, "n_steps": 10_000, "checkpoints": [0, 1000, 10_000], "diagnostics": False}
    cfg = build_config(raw, env=ENV)
    rows = {r["n"]: r for r in compare_online_offline(cfg)}
    row = rows[10_000]
    ok = row["ratio"] is not None and row["ratio"] <= 20 and row["offline"] >= 0.01 * row["minimax"]
    report(5, ok and time.time() - started < 300,
           f"online/offline at 1e4 = {row['ratio']:.3f} (<= 20); offline {row['offline']:.3e} >= "
           f"0.01 x minimax {row['minimax']:.3e}", started)


# 6 -----------------------------------------------------------------------------


def test_criterion_6_homogeneity_and_equivariance():
    started = time.time()
    worst_scale, worst_rot = 0.0, 0.0
    marks = range(0, 501, 10)
    for k in range(10):
        spec = make_spec([5.0, 4.0, 2.0, 1.0, 1.0, 0.5], 2)
        X = stream(spec, k, 500).take(500)
        ref = []
        run(X, 500, Harmonic(2.0, 2.0), QR(), marks, state=init_state(6, 2, k),
            callback=lambda s, r: ref.append(s.U.copy()))
        for c in (0.01, 100.0):
            got = []
            run(X * math.sqrt(c), 500, Harmonic(2.0, 2.0 * c), QR(), marks,
                state=init_state(6, 2, k), callback=lambda s, r: got.append(s.U.copy()))
            worst_scale = max(worst_scale, max(np.max(principal_angles(a, b))
                                               for a, b in zip(ref, got)))
        rot = make_spec(spec.lambdas, 2, rotation_seed=100 + k)
        Q = rot.rotation
        U0 = init_state(6, 2, k).U
        _, ra = run(X, 500, Harmonic(2.0, 2.0), QR(), marks, state=OjaState(U0.copy()), spec=spec)
        _, rb = run(X @ Q.T, 500, Harmonic(2.0, 2.0), QR(), marks, state=OjaState(Q @ U0),
                    spec=rot)
        for a, b in zip(ra, rb):
            worst_rot = max(worst_rot, abs(math.asin(min(1.0, math.sqrt(a.sin2F)))
                                           - math.asin(min(1.0, math.sqrt(b.sin2F)))),
                            abs(a.tan2 - b.tan2) / max(1.0, a.tan2))
    report(6, worst_scale <= 1e-9 and worst_rot <= 1e-9,
           f"scaling c in {{0.01,100}} max angle gap {worst_scale:.1e}; rotation max gap "
           f"{worst_rot:.1e} (tol 1e-9)", started)


# 7 -----------------------------------------------------------------------------


def test_criterion_7_theory_oracles():
    started = time.time()
    errs = []
    # phi examples against exact rational arithmetic
    errs.append(abs(phi([2, 1], 1).value - 2.0))
    exact = Fraction(1, 2) * 2 * (Fraction(4, 3) + Fraction(3, 2))
    errs.append(abs(phi([4, 3, 1, 1], 2).value - float(exact)))
    errs.append(abs(phi_gap_free([2, 2, 1], 1, 2, 1.0).value - 2.0))
    rng = np.random.default_rng(7)
    bound_ok = True
    for _ in range(1000):
        d = int(rng.integers(2, 13))
        p = int(rng.integers(1, d))
        lam = np.sort(rng.uniform(0.1, 10, d))[::-1]
        if lam[p - 1] - lam[p] < 1e-6:
            continue
        v, b = phi(lam, p)
        bound_ok &= v <= b * (1 + 1e-12)
        bound_ok &= phi_gap_free(lam, p, p, lam[p - 1] - lam[p]) == (v, b)
    # F products
    errs.append(abs(F_star(Harmonic(1.0, 0.5), 0.5, 2, 5) - 0.2))
    power_ok = all(F_star(Harmonic(2.0, 1.0), 1.0, N + 1, m * N) <= (N / (m * N)) ** 2
                   for N in (10, 100) for m in (10, 100))
    sched = Harmonic(2.0, 0.7)
    for n in (10, 57, 300):
        e = sched.rate(n)
        errs.append(abs(F_star(sched, 0.7, 2, n) - F_star(sched, 0.7, 2, n - 1) * (1 - e * 0.7)))
        errs.append(abs(F_D(sched, 0.7, 2, 2, 1, n)
                        - (F_D(sched, 0.7, 2, 2, 1, n - 1) * (1 - e * 0.7) ** 2 + e**2)))
    closed_ok = True
    for N in (10, 50):
        for m in (10, 100):
            for ratio in (0.5, 1.0, 2.0):
                n, gam = m * N, 1.0
                lam_ = ratio * gam
                val = F_D(Harmonic(2.0, gam), lam_, 2, 2, N + 1, n)
                closed_ok &= val <= 2 * 2.0 * (n - N) / (gam * n**2 * lam_) * (1 + 5 * N / n)
    errs.append(abs(L_norm(0.1, [2, 1], 1) - 0.9))
    errs.append(abs(L_matrix(0.1, [2, 1], 1)[0, 0] - 0.9))
    worst = max(errs)
    report(7, worst <= 1e-12 and bound_ok and power_ok and closed_ok,
           f"max identity error {worst:.1e} (tol 1e-12); phi bound {bound_ok}; "
           f"F_star power bound {power_ok}; F_D closed form C'=5 {closed_ok}", started)


# 8 -----------------------------------------------------------------------------


def test_criterion_8_hadamard_envelope(criterion3_run):
    cfg, res, _ = criterion3_run
    started = time.time()
    c = cfg.constants
    kept = [t for t in res.trials if all(r.n_out is None for r in t.records)]
    n0, n = cfg.schedule.n_o, 10_000
    T0 = np.sqrt(empirical_second_moment(kept, n0))
    env = hadamard_bound_trajectory(cfg.spec.lambdas, cfg.p, cfg.schedule, 16 * c["psi4"], n, T0,
                                    start=n0)
    R = remainder_term(c["C_R"], c["epsilon"], n, cfg.spec.d, c["delta"])
    emp = empirical_second_moment(kept, n)
    frac = float(np.mean(emp <= env + R))
    frac_no_r = float(np.mean(emp <= env))
    report(8, frac >= 0.95 and len(kept) > 0,
           f"{len(kept)}/{cfg.R} trials never hit N_out(2); E[T o T] at 1e4 under envelope+R in "
           f"{frac:.0%} of entries ({frac_no_r:.0%} without R; need >= 95%)", started)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
