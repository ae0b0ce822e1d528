import numpy as np
import pytest
from scipy import stats
from scipy.integrate import dblquad, quad

from shapeinv.smc import (
    CountingPotential,
    ParticleSystem,
    SmcConfig,
    ess,
    mutate,
    resample,
    reweight,
    run,
    select_next_temperature,
)


def system(Y, phi, T=0.0, W=None):
    Y = np.atleast_2d(Y)
    M = Y.shape[0]
    return ParticleSystem(Y, np.full(M, 1.0 / M) if W is None else np.asarray(W), T, phi)


def test_ess_examples():
    assert ess(np.full(7, 1 / 7)) == pytest.approx(7)
    assert ess([1.0, 0.0, 0.0]) == 1.0
    assert ess([0.5, 0.25, 0.25]) == pytest.approx(1 / 0.375)


def test_config_validation():
    with pytest.raises(ValueError):
        SmcConfig(n_particles=1)
    with pytest.raises(ValueError):
        SmcConfig(ess_factor=1.0)
    with pytest.raises(ValueError):
        SmcConfig(min_steps=5, max_steps=3)
    with pytest.raises(ValueError):
        SmcConfig(resampling="stratified-ish")


def test_temperature_trivial_cases():
    W = np.full(10, 0.1)
    assert select_next_temperature(np.full(10, 3.0), W, 0.2, 1 / 1.1) == 1.0
    assert select_next_temperature(np.linspace(0, 50, 10), W, 0.2, 1e-12) == 1.0
    with pytest.raises(ValueError):
        select_next_temperature(np.zeros(10), W, 1.0, 0.5)


def test_temperature_matches_grid_search():
    M = 1000
    phi = np.where(np.arange(M) < 300, 0.0, 40.0)
    W = np.full(M, 1.0 / M)
    target = 1 / 1.1
    got = select_next_temperature(phi, W, 0.0, target)
    grid = np.linspace(0, 1, 1_000_001)
    lw = -np.outer(grid, [0.0, 40.0])
    w = np.exp(lw) * np.array([300, 700])
    e = w.sum(1) ** 2 / (w**2 / np.array([300, 700])).sum(1)
    best = grid[np.flatnonzero(e >= target * M).max()]
    assert got == pytest.approx(best, abs=1e-5)
    wn = np.exp(-got * phi)
    wn /= wn.sum()
    assert ess(wn) == pytest.approx(target * M, abs=1e-3 * M)


def test_reweight_examples():
    s = system([[0.0], [0.5]], [0.0, np.log(4)])
    out = reweight(s, 0.5)
    assert np.allclose(out.weights, [2 / 3, 1 / 3])
    assert np.array_equal(out.positions, s.positions)
    assert np.allclose(reweight(s, 0.0).weights, s.weights)
    assert reweight(system([[0.1]], [3.0]), 1.0).weights[0] == 1.0
    with pytest.raises(ValueError):
        reweight(system([[0.1]], [3.0], T=0.5), 0.2)


def test_particle_system_invariants():
    with pytest.raises(ValueError):
        system([[1.5]], [0.0])
    with pytest.raises(ValueError):
        ParticleSystem([[0.0], [0.1]], [0.5, 0.6], 0.0, [0.0, 0.0])


@pytest.mark.parametrize("scheme", ["multinomial", "systematic"])
def test_resample_degenerate_and_bootstrap(scheme):
    rng = np.random.default_rng(0)
    Y = np.linspace(-1, 1, 5)[:, None]
    s = system(Y, np.arange(5.0), W=[0, 0, 1, 0, 0])
    out = resample(s, rng, scheme)
    assert np.all(out.positions == 0.0) and np.all(out.phi == 2.0)
    assert np.allclose(out.weights, 0.2)
    boot = resample(system(Y, np.arange(5.0)), rng, scheme)
    assert set(boot.positions.ravel()) <= set(Y.ravel())


def test_resample_copy_counts_binomial():
    rng = np.random.default_rng(1)
    W = np.array([0.5, 0.3, 0.15, 0.05])
    M, R = W.size, 10_000
    s = system(np.arange(M)[:, None] / 10, np.zeros(M), W=W)
    counts = np.zeros(M)
    for _ in range(R):
        idx = np.round(resample(s, rng).positions.ravel() * 10).astype(int)
        counts += np.bincount(idx, minlength=M)
    mean = counts / R
    sd = np.sqrt(M * W * (1 - W) / R)
    assert np.all(np.abs(mean - M * W) < 3 * sd)


def test_resample_unbiased_test_function():
    rng = np.random.default_rng(2)
    Y = rng.uniform(-1, 1, (50, 1))
    W = rng.dirichlet(np.ones(50))
    s = system(Y, np.zeros(50), W=W)
    f = np.sin(3 * Y.ravel())
    means = [np.sin(3 * resample(s, rng).positions.ravel()).mean() for _ in range(4000)]
    assert np.mean(means) == pytest.approx(W @ f, abs=4 * np.std(means) / np.sqrt(4000) + 1e-12)


def test_mutate_zero_temperature_keeps_uniform():
    rng = np.random.default_rng(3)
    M = 4000
    Y = rng.uniform(-1, 1, (M, 2))
    calls = CountingPotential(lambda X: np.sum(X**2, axis=1))
    s = system(Y, calls(Y))
    cfg = SmcConfig(n_particles=M, min_steps=10, max_steps=10)
    out, rep = mutate(s, calls, cfg, scale=1.0)
    assert rep.sweeps == 10
    assert calls.forward_calls == M * 11
    for j in range(2):
        assert stats.kstest(out.positions[:, j], stats.uniform(-1, 2).cdf).pvalue > 0.01


def test_mutate_tiny_scale_is_identity():
    rng = np.random.default_rng(4)
    Y = rng.uniform(-0.9, 0.9, (200, 3))
    pot = lambda X: np.sum(X**2, axis=1)  # noqa: E731
    s = system(Y, pot(Y), T=1.0)
    cfg = SmcConfig(n_particles=200, min_steps=2, max_steps=2)
    out, rep = mutate(s, pot, cfg, scale=1e-9)
    assert np.allclose(out.positions, Y, atol=1e-7)
    assert min(rep.acceptance) > 0.99


def test_mutate_matches_truncated_quadrature():
    a = 3.0
    pot = lambda X: 0.5 * a * (X[:, 0] - 0.4) ** 2  # noqa: E731
    rng = np.random.default_rng(5)
    M = 4000
    Y = rng.uniform(-1, 1, (M, 1))
    s = system(Y, pot(Y), T=1.0)
    cfg = SmcConfig(n_particles=M, min_steps=25, max_steps=25, seed=9)
    scale = 2.38
    for it in range(4):
        s, rep = mutate(s, pot, cfg, scale, iteration=it)
        scale = rep.scale
    dens = lambda y: np.exp(-0.5 * a * (y - 0.4) ** 2)  # noqa: E731
    Z = quad(dens, -1, 1)[0]
    m = quad(lambda y: y * dens(y), -1, 1)[0] / Z
    v = quad(lambda y: (y - m) ** 2 * dens(y), -1, 1)[0] / Z
    x = s.positions[:, 0]
    assert x.mean() == pytest.approx(m, rel=0.02)
    assert x.var() == pytest.approx(v, rel=0.02)
    ks = stats.ks_2samp(x, _reference_chain(pot, 40_000, seed=11))
    assert ks.pvalue > 0.01


def _reference_chain(pot, n, seed):
    rng = np.random.default_rng(seed)
    x, out = 0.0, []
    px = pot(np.array([[x]]))[0]
    for i in range(n * 10):
        y = x + 0.8 * rng.standard_normal()
        if abs(y) <= 1:
            py = pot(np.array([[y]]))[0]
            if np.log(rng.uniform()) < px - py:
                x, px = y, py
        if i % 10 == 0:
            out.append(x)
    return np.array(out)


def test_run_flat_likelihood_single_step():
    M = 500
    res = run(SmcConfig(n_particles=M, seed=1), 3, lambda X: 1e-9 * np.sum(X**2, axis=1))
    assert res.temperatures == [0.0, 1.0]
    assert res.forward_calls[-1] == M + M * res.total_sweeps
    x = res.particles.positions
    assert np.allclose(x.mean(axis=0), 0.0, atol=0.1)
    assert np.allclose(x.var(axis=0), 1 / 3, rtol=0.15)


def test_run_linear_gaussian_toy():
    A = np.array([[1.0, 0.5], [-0.3, 1.2], [0.7, 0.7]])
    y_true = np.array([0.3, -0.4])
    sigma2 = 0.05
    delta = A @ y_true + np.array([0.02, -0.05, 0.01])

    def pot(X):
        r = delta - X @ A.T
        return 0.5 * np.sum(r * r, axis=1) / sigma2

    M = 2000
    res = run(SmcConfig(n_particles=M, seed=0), 2, pot)
    temps = res.temperatures
    assert all(b > a for a, b in zip(temps, temps[1:])) and temps[-1] == 1.0
    assert res.forward_calls[-1] == M * (1 + res.total_sweeps)
    assert res.mutation_forward_calls == M * res.total_sweeps
    assert np.allclose(res.particles.weights, 1.0 / M)

    def dens(y1, y0):
        return np.exp(-pot(np.array([[y0, y1]]))[0])

    Z = dblquad(dens, -1, 1, -1, 1)[0]
    mean = np.array([dblquad(lambda y1, y0: y0 * dens(y1, y0), -1, 1, -1, 1)[0],
                     dblquad(lambda y1, y0: y1 * dens(y1, y0), -1, 1, -1, 1)[0]]) / Z
    sd = np.sqrt([dblquad(lambda y1, y0: (y0 - mean[0]) ** 2 * dens(y1, y0), -1, 1, -1, 1)[0],
                  dblquad(lambda y1, y0: (y1 - mean[1]) ** 2 * dens(y1, y0), -1, 1, -1, 1)[0]]) / np.sqrt(Z)
    post = res.particles
    # relative to the posterior spread, the typical 2% level for an M = 2000 population
    assert np.all(np.abs(post.mean() - mean) < 0.1 * sd)
    assert np.allclose(np.sqrt(np.diag(post.cov())), sd, rtol=0.1)


def test_run_deterministic_and_counted():
    pot = lambda X: 5.0 * np.sum((X - 0.2) ** 2, axis=1)  # noqa: E731
    a = run(SmcConfig(n_particles=300, seed=3), 2, pot)
    b = run(SmcConfig(n_particles=300, seed=3), 2, pot)
    assert np.array_equal(a.particles.positions, b.particles.positions)
    assert a.temperatures == b.temperatures
    rows = a.diagnostics_rows()
    assert len(rows) == len(a.temperatures) - 1
    assert rows[-1]["T"] == 1.0
    assert a.initial_forward_calls == 300


def test_reweight_and_resample_do_not_call_model():
    calls = CountingPotential(lambda X: np.sum(X**2, axis=1))
    rng = np.random.default_rng(0)
    Y = rng.uniform(-1, 1, (100, 2))
    s = system(Y, calls(Y))
    before = calls.forward_calls
    s = reweight(s, 0.3)
    s = resample(s, rng)
    assert calls.forward_calls == before


def test_counting_potential_skips_outside_cube():
    calls = CountingPotential(lambda X: np.zeros(len(X)))
    out = calls(np.array([[0.0, 0.5], [1.5, 0.0]]))
    assert out[1] == np.inf and out[0] == 0.0
    assert calls.forward_calls == 2 and calls.model_evaluations == 1
