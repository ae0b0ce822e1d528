"""Tempered sequential Monte Carlo on the coefficient cube ``[-1, 1]^J``.

Each iteration raises the temperature adaptively so that the effective
sample size drops to a fixed fraction of ``M``, resamples, and then moves
the particles with random-walk Metropolis-Hastings targeting the tempered
posterior ``exp(-T Phi) * prior``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

logger = logging.getLogger(__name__)

RESAMPLING = ("multinomial", "systematic")


@dataclass(frozen=True)
class SmcConfig:
    """Settings of the tempered SMC sampler.

    Parameters
    ----------
    n_particles : int
        Population size ``M``.
    ess_factor : float
        Target ``ESS / M`` when choosing the next temperature.
    max_steps, min_steps : int
        Bounds on the number of RWMH sweeps per temperature.
    resampling : {"multinomial", "systematic"}
    always_resample : bool
        Resample every iteration; otherwise only when ``ESS < ess_factor M``.
    seed : int
    temperature_tol : float
        Bisection tolerance on the temperature increment.
    max_iterations : int
        Safety cap on the number of tempering steps.
    """

    n_particles: int = 1000
    ess_factor: float = 1.0 / 1.1
    max_steps: int = 25
    min_steps: int = 2
    resampling: str = "multinomial"
    always_resample: bool = True
    seed: int = 0
    temperature_tol: float = 1e-6
    max_iterations: int = 10_000
    scale_init: float | None = None

    def __post_init__(self):
        if self.n_particles < 2:
            raise ValueError("n_particles must be >= 2")
        if not 0.0 < self.ess_factor < 1.0:
            raise ValueError("ess_factor must lie in (0, 1)")
        if not 1 <= self.min_steps <= self.max_steps:
            raise ValueError("need 1 <= min_steps <= max_steps")
        if self.resampling not in RESAMPLING:
            raise ValueError(f"resampling must be one of {RESAMPLING}")
        if not self.temperature_tol > 0:
            raise ValueError("temperature_tol must be positive")


@dataclass
class ParticleSystem:
    """Weighted particle population at temperature ``T``."""

    positions: np.ndarray
    weights: np.ndarray
    T: float
    phi: np.ndarray
    history: list = field(default_factory=list)

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float)
        if np.any(np.abs(self.positions) > 1.0):
            raise ValueError("particles must lie in [-1, 1]^J")
        if abs(self.weights.sum() - 1.0) > 1e-10:
            raise ValueError("weights must sum to one")

    @property
    def size(self):
        return self.positions.shape[0]

    @property
    def dim(self):
        return self.positions.shape[1]

    def mean(self):
        return self.weights @ self.positions

    def cov(self):
        d = self.positions - self.mean()
        return (d * self.weights[:, None]).T @ d


class CountingPotential:
    """Wrap a batch potential ``f(Y) -> Phi`` and count forward evaluations.

    ``forward_calls`` counts every row handed to the forward model. Rows
    outside the cube have zero prior density and are answered with ``inf``
    without invoking ``f``; ``model_evaluations`` counts only rows that
    reached ``f``.
    """

    def __init__(self, func):
        self.func = func
        self.forward_calls = 0
        self.model_evaluations = 0

    def __call__(self, Y):
        Y = np.atleast_2d(Y)
        self.forward_calls += Y.shape[0]
        out = np.full(Y.shape[0], np.inf)
        inside = np.all(np.abs(Y) <= 1.0, axis=1)
        if inside.any():
            self.model_evaluations += int(inside.sum())
            out[inside] = np.asarray(self.func(Y[inside]), dtype=float)
        return out


def ess(W):
    """Effective sample size ``1 / sum W_i^2`` of normalized weights."""
    W = np.asarray(W, dtype=float)
    return float(1.0 / np.sum(W * W))


def _ess_after(logw, phi, dT):
    lw = logw - dT * phi
    lw = lw - logsumexp(lw)
    return float(np.exp(-logsumexp(2.0 * lw)))


def select_next_temperature(phi, W, T, target, tol=1e-6, ess_tol=None):
    """Largest ``T_next`` in ``(T, 1]`` keeping ``ESS >= target * M``.

    Bisection stops once the temperature bracket is below ``tol`` and the
    ESS at the returned temperature is within ``ess_tol * M`` of the target
    (default ``1e-4``). If the full jump already keeps the ESS above the
    target, 1 is returned. If even ``T + tol`` violates it, ``T + tol`` is
    returned and a warning logged.
    """
    phi = np.asarray(phi, dtype=float)
    W = np.asarray(W, dtype=float)
    if T >= 1.0:
        raise ValueError("current temperature must be < 1")
    M = phi.size
    goal = target * M
    ess_tol = 1e-4 if ess_tol is None else ess_tol
    with np.errstate(divide="ignore"):
        logw = np.log(W)
    if _ess_after(logw, phi - phi.min(), 1.0 - T) >= goal:
        return 1.0
    p = phi - phi.min()
    lo, hi = 0.0, 1.0 - T
    if _ess_after(logw, p, min(tol, hi)) < goal:
        logger.warning("minimal temperature step %.1e violates the ESS target", tol)
        return min(1.0, T + tol)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _ess_after(logw, p, mid) >= goal:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol and _ess_after(logw, p, lo) - goal <= ess_tol * M:
            break
        if hi - lo <= 1e-15:
            break
    return T + lo


def reweight(sys: ParticleSystem, T_next) -> ParticleSystem:
    """Multiply weights by ``exp(-(T_next - T) Phi)`` and renormalize in log space."""
    if T_next < sys.T:
        raise ValueError("temperature must not decrease")
    with np.errstate(divide="ignore"):
        lw = np.log(sys.weights) - (T_next - sys.T) * (sys.phi - sys.phi.min())
    norm = logsumexp(lw)
    if not np.isfinite(norm):
        raise FloatingPointError("total particle weight underflowed")
    W = np.exp(lw - norm)
    W /= W.sum()
    return replace(sys, weights=W, T=float(T_next))


def resample(sys: ParticleSystem, rng, scheme="multinomial") -> ParticleSystem:
    """Draw ``M`` indices according to the weights and reset weights to ``1/M``."""
    M = sys.size
    if scheme == "multinomial":
        idx = rng.choice(M, size=M, p=sys.weights)
        idx.sort()
    elif scheme == "systematic":
        u = (rng.uniform() + np.arange(M)) / M
        cdf = np.cumsum(sys.weights)
        cdf[-1] = 1.0
        idx = np.searchsorted(cdf, u, side="left")
    else:
        raise ValueError(f"unknown resampling scheme {scheme!r}")
    return replace(sys, positions=sys.positions[idx].copy(), phi=sys.phi[idx].copy(),
                   weights=np.full(M, 1.0 / M))


@dataclass
class MutationReport:
    sweeps: int
    acceptance: list
    scale: float


def _sweep_rng(seed, iteration, sweep):
    return np.random.default_rng(np.random.SeedSequence([seed, iteration, sweep]))


def mutate(sys: ParticleSystem, potential, config: SmcConfig, scale, iteration=0):
    """Random-walk Metropolis sweeps targeting ``exp(-T Phi)`` on the cube.

    Proposal ``y' = y + sigma * z`` with ``sigma_j = scale * std_j``
    (population standard deviation). ``scale`` is multiplied by 1.1 after a
    sweep with acceptance above 0.3 and by 0.9 below 0.15. Sweeps continue
    until the accumulated acceptance reaches one move per particle or
    ``max_steps``, with at least ``min_steps``.

    Returns
    -------
    ParticleSystem, MutationReport
    """
    Y = sys.positions.copy()
    phi = sys.phi.copy()
    M, J = Y.shape
    acc_hist = []
    total = 0.0
    sweep = 0
    while sweep < config.max_steps:
        sd = Y.std(axis=0)
        sd = np.where(sd > 0, sd, 1e-3)
        rng = _sweep_rng(config.seed, iteration, sweep)
        z = rng.standard_normal((M, J))
        logu = np.log(rng.uniform(size=M))
        prop = Y + scale * sd * z
        inside = np.all(np.abs(prop) <= 1.0, axis=1)
        phi_prop = potential(prop)
        with np.errstate(invalid="ignore"):
            log_ratio = -sys.T * (phi_prop - phi)
        accept = inside & (logu < log_ratio)
        if sys.T == 0.0:
            accept = inside & np.isfinite(phi_prop)
        Y[accept] = prop[accept]
        phi[accept] = phi_prop[accept]
        rate = float(accept.mean())
        acc_hist.append(rate)
        total += rate
        sweep += 1
        if rate > 0.3:
            scale *= 1.1
        elif rate < 0.15:
            scale *= 0.9
        if sweep >= config.min_steps and total >= 1.0:
            break
    out = replace(sys, positions=Y, phi=phi)
    return out, MutationReport(sweep, acc_hist, scale)


@dataclass
class SmcResult:
    """Posterior particles together with per-step diagnostics."""

    particles: ParticleSystem
    temperatures: list
    ess: list
    acceptance: list
    sweeps: list
    forward_calls: list
    wall_time: list
    initial_forward_calls: int
    model_evaluations: int

    @property
    def total_sweeps(self):
        return int(sum(self.sweeps))

    @property
    def mutation_forward_calls(self):
        return self.forward_calls[-1] - self.initial_forward_calls if self.forward_calls else 0

    def diagnostics_rows(self):
        rows = []
        for i, T in enumerate(self.temperatures[1:]):
            rows.append({
                "iteration": i + 1,
                "T": T,
                "ESS": self.ess[i],
                "acceptance": float(np.mean(self.acceptance[i])) if self.acceptance[i] else 0.0,
                "sweeps": self.sweeps[i],
                "forward_calls": self.forward_calls[i],
                "wall_time": self.wall_time[i],
            })
        return rows


def run(config: SmcConfig, n_dim, potential, initial=None) -> SmcResult:
    """Run tempered SMC from the uniform prior on ``[-1, 1]^n_dim`` to ``T = 1``.

    Parameters
    ----------
    config : SmcConfig
    n_dim : int
        Number of coefficients ``J``.
    potential : callable
        Maps an ``(n, J)`` array to ``n`` potentials. Wrapped in
        :class:`CountingPotential` unless it already is one.
    initial : (M, J) ndarray, optional
        Initial prior draws (sampled from the seed otherwise).
    """
    pot = potential if isinstance(potential, CountingPotential) else CountingPotential(potential)
    M = config.n_particles
    t0 = time.perf_counter()
    rng0 = np.random.default_rng(np.random.SeedSequence([config.seed, 0xC0FFEE]))
    Y = rng0.uniform(-1.0, 1.0, size=(M, n_dim)) if initial is None else np.asarray(initial, float)
    phi = pot(Y)
    if not np.all(np.isfinite(phi)):
        raise FloatingPointError("non-finite potential at initialization")
    init_calls = pot.forward_calls
    sys = ParticleSystem(Y, np.full(M, 1.0 / M), 0.0, phi)
    scale = config.scale_init if config.scale_init is not None else 2.38 / np.sqrt(n_dim)
    temps, ess_trace, acc, sweeps, calls, wall = [0.0], [], [], [], [], []
    it = 0
    while sys.T < 1.0:
        it += 1
        if it > config.max_iterations:
            raise RuntimeError(f"no convergence to T = 1 after {config.max_iterations} iterations")
        try:
            T_next = select_next_temperature(sys.phi, sys.weights, sys.T, config.ess_factor,
                                             tol=config.temperature_tol)
            sys = reweight(sys, T_next)
        except FloatingPointError as exc:
            raise FloatingPointError(f"iteration {it}: {exc}") from exc
        ess_trace.append(ess(sys.weights))
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, it, 0xBEEF]))
        if config.always_resample or ess_trace[-1] < config.ess_factor * M:
            sys = resample(sys, rng, config.resampling)
        if not np.allclose(sys.weights, 1.0 / M):
            # mutation assumes an equally weighted population
            sys = resample(sys, rng, config.resampling)
        sys, rep = mutate(sys, pot, config, scale, iteration=it)
        scale = rep.scale
        temps.append(sys.T)
        acc.append(rep.acceptance)
        sweeps.append(rep.sweeps)
        calls.append(pot.forward_calls)
        wall.append(time.perf_counter() - t0)
        sys.history.append((sys.T, ess_trace[-1], rep.sweeps))
        logger.info("T=%.6f ESS=%.1f sweeps=%d acc=%.3f", sys.T, ess_trace[-1], rep.sweeps,
                    np.mean(rep.acceptance))
    return SmcResult(sys, temps, ess_trace, acc, sweeps, calls, wall, init_calls, pot.model_evaluations)
