import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_orthonormal
from ojapca.exceptions import HeadSingular, NotOrthonormal
from ojapca.metrics import (
    principal_angles,
    scrT,
    scrT_norm,
    sin_theta_norm,
    sphere_membership,
    tan_theta_norm,
)

E = np.eye(4)
DIAG = np.array([[1.0], [1.0]]) / np.sqrt(2)


def test_identical_subspaces_have_zero_angles():
    X = E[:, :2]
    np.testing.assert_allclose(principal_angles(X, X), 0.0, atol=1e-15)
    assert sin_theta_norm(X, X) == pytest.approx(0.0, abs=1e-15)
    assert tan_theta_norm(X, X) == pytest.approx(0.0, abs=1e-15)


def test_quarter_turn():
    e1 = np.array([[1.0], [0.0]])
    np.testing.assert_allclose(principal_angles(e1, DIAG), [np.pi / 4])
    for kind in ("spectral", "frobenius"):
        assert sin_theta_norm(e1, DIAG, kind) == pytest.approx(1 / np.sqrt(2))
        assert tan_theta_norm(e1, DIAG, kind) == pytest.approx(1.0)


def test_right_angles():
    e1, e2 = np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]])
    np.testing.assert_allclose(principal_angles(e1, e2), [np.pi / 2])
    assert tan_theta_norm(e1, e2) == np.inf
    assert tan_theta_norm(e1, e2, "spectral") == np.inf
    assert sin_theta_norm(E[:, :2], E[:, 2:]) == pytest.approx(np.sqrt(2))


def test_angles_sorted_and_in_range(rng):
    X, Y = random_orthonormal(rng, 9, 3), random_orthonormal(rng, 9, 5)
    th = principal_angles(X, Y)
    assert np.all(np.diff(th) >= 0)
    assert np.all((th >= 0) & (th <= np.pi / 2))


def test_angles_match_cosine_definition(rng):
    # well-separated case: plain arccos of singular values is accurate here
    X, Y = random_orthonormal(rng, 6, 2), random_orthonormal(rng, 6, 3)
    ref = np.arccos(np.clip(np.linalg.svd(X.T @ Y, compute_uv=False), 0, 1))
    np.testing.assert_allclose(principal_angles(X, Y), ref, atol=1e-7)


def test_tiny_angle_resolved():
    t = 1e-11
    X = np.array([[1.0], [0.0], [0.0]])
    Y = np.array([[np.cos(t)], [np.sin(t)], [0.0]])
    assert principal_angles(X, Y)[0] == pytest.approx(t, rel=1e-6)


def test_not_orthonormal():
    with pytest.raises(NotOrthonormal):
        principal_angles(np.array([[2.0], [0.0]]), np.array([[1.0], [0.0]]))
    with pytest.raises(NotOrthonormal):
        sphere_membership(np.array([[2.0], [0.0]]), 1.0)


def test_basis_invariance(rng):
    for _ in range(50):
        X, Y = random_orthonormal(rng, 8, 3), random_orthonormal(rng, 8, 4)
        R = random_orthonormal(rng, 3, 3)
        np.testing.assert_allclose(principal_angles(X @ R, Y), principal_angles(X, Y), atol=1e-10)


def test_scrT_examples():
    np.testing.assert_allclose(scrT(E[:, :2], 2), np.zeros((2, 2)))
    np.testing.assert_allclose(scrT(DIAG), [[1.0]])
    assert tan_theta_norm(DIAG, np.array([[1.0], [0.0]])) == pytest.approx(1.0)
    v = np.ones((3, 1)) / np.sqrt(3)
    np.testing.assert_allclose(scrT(v, 2), [[1.0]])
    assert tan_theta_norm(v, np.eye(3)[:, :2]) <= 1.0 + 1e-12


def test_scrT_head_singular():
    V = np.array([[0.0], [1.0], [0.0]])
    with pytest.raises(HeadSingular):
        scrT(V)
    assert scrT_norm(V, 1) == np.inf


def test_scrT_against_explicit_inverse(rng):
    V = random_orthonormal(rng, 7, 3)
    ref = V[4:] @ np.linalg.inv(V[:3])
    np.testing.assert_allclose(scrT(V, 4), ref, atol=1e-12)


def test_sphere_membership_examples(rng):
    assert sphere_membership(E[:, :2], 0.0)
    assert sphere_membership(DIAG, 1.0)
    assert not sphere_membership(DIAG, 0.5)


def test_sphere_membership_matches_chart_norm(rng):
    for _ in range(300):
        d = int(rng.integers(2, 9))
        p = int(rng.integers(1, d))
        V = random_orthonormal(rng, d, p)
        kappa = float(rng.uniform(0, 4))
        tn = scrT_norm(V, p, "spectral")
        if abs(tn - kappa) < 1e-9:
            continue
        assert sphere_membership(V, kappa) == (tn <= kappa)


def _random_case(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 21))
    p = int(rng.integers(1, min(5, d - 1) + 1))
    return rng, d, p


def test_tan_equals_chart_norm_when_p_equals_q():
    worst = 0.0
    for seed in range(1000):
        rng, d, p = _random_case(seed)
        V = random_orthonormal(rng, d, p)
        target = np.eye(d)[:, :p]
        for kind in ("spectral", "frobenius"):
            a, b = tan_theta_norm(V, target, kind), scrT_norm(V, p, kind)
            worst = max(worst, abs(a - b) / b)
    assert worst <= 1e-9


def test_tan_bounded_by_chart_norm_when_p_below_q():
    for seed in range(500):
        rng, d, p = _random_case(seed)
        if d - p < 2:
            continue
        q = int(rng.integers(p + 1, d))
        V = random_orthonormal(rng, d, p)
        target = np.eye(d)[:, :q]
        for kind in ("spectral", "frobenius"):
            assert tan_theta_norm(V, target, kind) <= scrT_norm(V, q, kind) + 1e-9


@settings(max_examples=100, deadline=None)
@given(st.integers(3, 10), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_sin_metric_symmetric_and_triangle(d, p, seed):
    p = min(p, d - 1)
    rng = np.random.default_rng(seed)
    X, Y, Z = (random_orthonormal(rng, d, p) for _ in range(3))
    for kind in ("spectral", "frobenius"):
        assert sin_theta_norm(X, Y, kind) == pytest.approx(sin_theta_norm(Y, X, kind), abs=1e-12)
        assert sin_theta_norm(X, Z, kind) <= sin_theta_norm(X, Y, kind) + sin_theta_norm(Y, Z, kind) + 1e-9
