import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from shapeinv.estimator import MeasurementOperator, ShapeInversion


def toy_forward(Y):
    return np.column_stack([Y[:, 0] + 0.5 * Y[:, 1], Y[:, 1] - 0.2 * Y[:, 0], Y.sum(axis=1)])


def test_get_params_and_clone():
    est = ShapeInversion(n_particles=50, K=3, random_state=4)
    params = est.get_params()
    assert params["n_particles"] == 50 and params["K"] == 3
    twin = clone(est)
    assert twin.get_params() == params
    assert twin is not est


def test_fit_predict_with_toy_forward():
    y_true = np.array([0.4, -0.3])
    delta = toy_forward(y_true[None, :])[0]
    est = ShapeInversion(n_modes=2, K=3, noise_variance=0.01, n_particles=400, random_state=0,
                         forward=toy_forward).fit(delta)
    assert np.allclose(est.posterior_mean_, y_true, atol=0.1)
    assert est.forward_calls_ >= 400
    phi = np.linspace(0, 2 * np.pi, 16)
    assert est.predict(phi).shape == (16,)
    assert np.all(est.predict_std(phi) < est.prior_std(phi))


def test_not_fitted_and_bad_input():
    with pytest.raises(NotFittedError):
        ShapeInversion().predict([0.0])
    with pytest.raises(ValueError):
        ShapeInversion(K=3, forward=toy_forward).fit(np.zeros(4))


def test_measurement_operator():
    op = MeasurementOperator(n_modes=2, K=4, h=0.004).fit()
    G = op.transform(np.zeros((2, 2)))
    assert G.shape == (2, 4)
    assert np.allclose(G[0], G[1])
    with pytest.raises(ValueError):
        op.transform(np.full((1, 2), 2.0))
    with pytest.raises(ValueError):
        op.transform(np.zeros((1, 3)))
