import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.stats import special_ortho_group

from shapeinv.bayes import (
    FemPotential,
    hellinger_distance_weights,
    hellinger_estimate,
    potential,
    tempered_log_increment,
)
from shapeinv.observe import MeasurementSetup, NoiseModel, observe
from shapeinv.shape import RadiusField


def test_potential_examples():
    assert potential([1.0, 2.0], [1.0, 2.0], NoiseModel.isotropic(1.0, 2)) == 0.0
    assert potential([0.0, 0.0], [3.0, 4.0], NoiseModel.isotropic(1.0, 2)) == pytest.approx(12.5)
    assert potential([0.0, 0.0], [0.1, 0.0], NoiseModel.isotropic(0.01, 2)) == pytest.approx(0.5)


def test_potential_batch_and_mismatch():
    nm = NoiseModel.isotropic(1.0, 2)
    out = potential([[0.0, 0.0], [3.0, 4.0]], [3.0, 4.0], nm)
    assert np.allclose(out, [12.5, 0.0])
    with pytest.raises(ValueError):
        potential([0.0, 0.0, 0.0], [1.0, 2.0], nm)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_potential_rotation_invariant(seed):
    rng = np.random.default_rng(seed)
    K = 4
    A = rng.normal(size=(K, K))
    cov = A @ A.T + np.eye(K)
    r = rng.normal(size=K)
    Q = special_ortho_group.rvs(K, random_state=rng)
    p1 = potential(np.zeros(K), r, NoiseModel(cov))
    p2 = potential(np.zeros(K), Q @ r, NoiseModel(Q @ cov @ Q.T))
    assert p1 >= 0
    assert p2 == pytest.approx(p1, rel=1e-9)


def test_tempered_increment():
    assert tempered_log_increment(2.0, 0.3, 0.3) == 0.0
    assert tempered_log_increment(2.0, 0.0, 1.0) == -2.0
    assert tempered_log_increment(2.0, 0.5, 0.75) == pytest.approx(-0.5)
    with pytest.raises(ValueError):
        tempered_log_increment(1.0, 0.6, 0.5)


def _toy(M, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.uniform(-1, 1, M)
    return y, (2.0 * y)[:, None]


def test_hellinger_identical_data_zero():
    _, G = _toy(200)
    nm = NoiseModel.isotropic(0.1, 1)
    assert hellinger_estimate(G, [0.3], [0.3], nm) == 0.0


def test_hellinger_symmetric_bounded():
    _, G = _toy(1000)
    nm = NoiseModel.isotropic(0.1, 1)
    a = hellinger_estimate(G, [0.3], [0.9], nm)
    b = hellinger_estimate(G, [0.9], [0.3], nm)
    assert 0.0 <= a <= 1.0
    assert a == pytest.approx(b, rel=1e-10)


def test_hellinger_disjoint_is_one():
    assert hellinger_distance_weights([0.0, -np.inf], [-np.inf, 0.0]) == 1.0


def test_hellinger_matches_quadrature():
    nm = NoiseModel.isotropic(0.1, 1)
    d1, d2 = 0.2, 0.5

    def like(y, d):
        return np.exp(-0.5 * (d - 2.0 * y) ** 2 / 0.1)

    za = quad(lambda y: like(y, d1), -1, 1)[0]
    zb = quad(lambda y: like(y, d2), -1, 1)[0]
    bc = quad(lambda y: np.sqrt(like(y, d1) * like(y, d2)), -1, 1)[0]
    exact = np.sqrt(1 - bc / np.sqrt(za * zb))
    _, G = _toy(100_000, seed=3)
    assert hellinger_estimate(G, [d1], [d2], nm) == pytest.approx(exact, abs=1e-2)


def test_hellinger_linear_in_small_perturbation():
    _, G = _toy(20_000, seed=4)
    nm = NoiseModel.isotropic(0.1, 1)
    d = [hellinger_estimate(G, [0.2], [0.2 + e], nm) / e for e in (1e-3, 2e-3, 4e-3)]
    assert max(d) / min(d) < 1.05


def test_hellinger_underflow_error():
    with pytest.raises(FloatingPointError):
        hellinger_distance_weights([-np.inf, -np.inf], [0.0, 0.0])


def test_fem_potential(default_solver, coeffs6):
    setup = MeasurementSetup(K=8)
    y = np.linspace(-0.5, 0.5, 6)
    g = observe(default_solver.solve(RadiusField(y, coeffs6)), setup)
    nm = NoiseModel.isotropic(0.01, 8)
    with FemPotential(default_solver, coeffs6, setup, g, nm) as pot:
        assert pot(y[None, :])[0] == pytest.approx(0.0, abs=1e-20)
        assert pot.n_solves == 1
    with pytest.raises(ValueError):
        FemPotential(default_solver, coeffs6, setup, g[:4], nm)
