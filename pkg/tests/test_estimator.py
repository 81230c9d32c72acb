import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from ojapca import OjaPCA
from ojapca.engine import Harmonic, init_state, run
from ojapca.metrics import sin_theta_norm
from ojapca.samplers import make_spec, stream


@pytest.fixture
def data():
    spec = make_spec([5.0, 4.0, 1.0, 1.0, 0.5, 0.5], 2, rotation_seed=3)
    return spec, stream(spec, 0, 5000).take(5000)


def test_params_round_trip():
    est = OjaPCA(3, schedule="two_phase", n_o=50, normalizer="deferred", period=5, random_state=1)
    params = est.get_params()
    assert params["n_components"] == 3 and params["period"] == 5
    other = clone(est)
    assert other.get_params() == params
    est.set_params(c_eta=4.0)
    assert est.c_eta == 4.0


def test_fit_recovers_subspace(data):
    spec, X = data
    est = OjaPCA(2, gamma_ref=3.0, random_state=0).fit(X)
    assert est.components_.shape == (2, 6)
    assert est.n_samples_seen_ == 5000
    np.testing.assert_allclose(est.components_ @ est.components_.T, np.eye(2), atol=1e-10)
    assert sin_theta_norm(est.components_.T, spec.target_basis()) < 0.2


def test_fit_matches_engine(data):
    _, X = data
    est = OjaPCA(2, c_eta=2.0, gamma_ref=3.0, random_state=7).fit(X)
    st, _ = run(X, len(X), Harmonic(2.0, 3.0), state=init_state(6, 2, 7))
    np.testing.assert_array_equal(est.components_, st.U.T)


@pytest.mark.parametrize("normalizer", ["qr", "polar"])
def test_partial_fit_equals_fit(data, normalizer):
    _, X = data
    full = OjaPCA(2, normalizer=normalizer, random_state=4).fit(X)
    inc = OjaPCA(2, normalizer=normalizer, random_state=4)
    for block in np.array_split(X, 7):
        inc.partial_fit(block)
    np.testing.assert_array_equal(inc.components_, full.components_)
    assert inc.n_samples_seen_ == len(X)


def test_fit_resets(data):
    _, X = data
    est = OjaPCA(2, random_state=4)
    est.fit(X[:100])
    est.fit(X[:100])
    assert est.n_samples_seen_ == 100


def test_transform_and_inverse(data):
    _, X = data
    est = OjaPCA(2, gamma_ref=3.0, random_state=0).fit(X)
    Z = est.transform(X[:10])
    assert Z.shape == (10, 2)
    np.testing.assert_allclose(Z, X[:10] @ est.components_.T)
    back = est.inverse_transform(Z)
    np.testing.assert_allclose(est.transform(back), Z, atol=1e-12)
    np.testing.assert_allclose(est.fit_transform(X), est.transform(X))


def test_validation(data):
    _, X = data
    with pytest.raises(NotFittedError):
        OjaPCA(2).transform(X)
    with pytest.raises(ValueError):
        OjaPCA(6).fit(X)
    with pytest.raises(ValueError):
        OjaPCA(2, schedule="cosine").fit(X)
    with pytest.raises(ValueError):
        OjaPCA(2, normalizer="householder").fit(X)
    bad = X[:5].copy()
    bad[2, 1] = np.nan
    with pytest.raises(ValueError):
        OjaPCA(2).fit(bad)
    est = OjaPCA(2, random_state=0).fit(X)
    with pytest.raises(ValueError):
        est.transform(X[:, :4])
    with pytest.raises(ValueError):
        est.partial_fit(X[:, :4])


def test_in_pipeline(data):
    _, X = data
    pipe = make_pipeline(StandardScaler(), OjaPCA(2, random_state=0))
    assert pipe.fit_transform(X).shape == (5000, 2)


def test_schedules_and_deferred(data):
    _, X = data
    for kw in ({"schedule": "constant", "eta": 0.001}, {"schedule": "two_phase", "n_o": 200,
                                                          "gamma_ref": 3.0, "normalizer": "deferred"}):
        est = OjaPCA(2, random_state=0, **kw).fit(X)
        np.testing.assert_allclose(est.components_ @ est.components_.T, np.eye(2), atol=1e-10)
