import warnings

import numpy as np
import pytest
from sklearn.base import clone

from botlab.estimators import BearingsLSE, BearingsMLE
from botlab.exceptions import ConfigurationError
from botlab.noise import IsotropicGaussian
from botlab.sim import simulate


@pytest.fixture(scope="module")
def data(small_scenario):
    d = simulate(small_scenario, 2, 0)
    return d.t[:, None], d.y


def test_params_and_clone(path):
    est = BearingsLSE(observer=path, multistart=3)
    params = est.get_params()
    assert params["multistart"] == 3 and params["observer"] is path
    c = clone(est)
    assert c.get_params()["multistart"] == 3
    assert not hasattr(c, "theta_")
    est.set_params(xatol=1e-8)
    assert est.xatol == 1e-8


def test_lse_fit_predict_score(path, data, small_scenario):
    X, y = data
    est = BearingsLSE(observer=path).fit(X, y)
    assert est.converged_ and est.n_evals_ > 0
    assert np.allclose(est.theta_, small_scenario.theta_star, atol=[0.5, 0.03, 0.5, 0.03])
    pred = est.predict(X)
    assert pred.shape == y.shape
    assert np.sqrt(np.mean((pred - y) ** 2)) < 5e-3
    # score is the negated criterion, so the fit maximises it
    worse = clone(est)
    worse.theta_ = est.theta_ + [0.5, 0, 0, 0]
    assert est.score(X, y) > worse.score(X, y)


def test_mle_close_to_lse(path, data):
    X, y = data
    a = BearingsLSE(observer=path).fit(X, y)
    b = BearingsMLE(observer=path, trajectory_noise=IsotropicGaussian(0.01), theta_init=a.theta_).fit(X, y)
    assert b.converged_
    assert np.allclose(a.theta_, b.theta_, atol=[0.3, 0.02, 0.3, 0.02])


def test_input_validation(path, data):
    X, y = data
    with pytest.raises(ConfigurationError):
        BearingsLSE().fit(X, y)
    with pytest.raises(ConfigurationError):
        BearingsLSE(observer=path).fit(np.hstack([X, X]), y)
    with pytest.raises(ConfigurationError):
        BearingsLSE(observer=path).fit(X + 2.0, y)
    with pytest.raises(ValueError):
        BearingsLSE(observer=path).fit(X, y[:-1])
    with pytest.raises(ConfigurationError):
        BearingsMLE(observer=path, trajectory_noise="iso").fit(X, y)


def test_unfitted_predict_raises(path, data):
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        BearingsLSE(observer=path).predict(data[0])


def test_nonconvergence_warns(path, data):
    X, y = data
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        est = BearingsLSE(observer=path, max_fun_evals=5).fit(X, y)
    assert not est.converged_
    assert any(issubclass(w.category, RuntimeWarning) for w in caught)
