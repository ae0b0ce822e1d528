"""Scikit-learn style wrappers around the forward map and the SMC inversion."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .bayes import FemPotential, potential
from .forward import ForwardSolver, PhysicsParams, default_mesh_config
from .mesh import build_disk_mesh
from .observe import MeasurementSetup, NoiseModel, observe
from .shape import PriorSpec, RadiusField, truncation_level, whittle_matern_coeffs
from .smc import CountingPotential, SmcConfig, run


def _coefficients(r0, s, epsilon, n_modes):
    if n_modes == "auto95":
        n_modes = truncation_level(whittle_matern_coeffs(r0, s, epsilon, 1))
    return whittle_matern_coeffs(r0, s, epsilon, int(n_modes))


def _check_coefficients(Y, n_modes):
    Y = check_array(Y, ensure_2d=True, dtype=float)
    if Y.shape[1] != n_modes:
        raise ValueError(f"expected {n_modes} coefficients per row, got {Y.shape[1]}")
    if np.any(np.abs(Y) > 1.0):
        raise ValueError("coefficients must lie in [-1, 1]")
    return Y


class MeasurementOperator(TransformerMixin, BaseEstimator):
    """Forward map ``y -> G(y)`` as a transformer.

    ``fit`` builds the reference mesh and solver; ``transform`` maps rows of
    prior coefficients to ring measurements.

    Parameters
    ----------
    frequency : float
    n_in, alpha_in : float
        Interior material parameters (exterior ones are fixed to 1).
    r0, s, epsilon : float
        Prior family.
    n_modes : int or "auto95"
    K : int
    r1 : float
    mode : {"amplitude", "real-part"}
    h : float
        Reference mesh size.
    """

    def __init__(self, frequency=1.0e9, n_in=0.9, alpha_in=1.0, r0=0.01, s=0.1, epsilon=0.001,
                 n_modes="auto95", K=100, r1=0.06, mode="amplitude", h=0.00125):
        self.frequency = frequency
        self.n_in = n_in
        self.alpha_in = alpha_in
        self.r0 = r0
        self.s = s
        self.epsilon = epsilon
        self.n_modes = n_modes
        self.K = K
        self.r1 = r1
        self.mode = mode
        self.h = h

    def fit(self, X=None, y=None):
        self.coeffs_ = _coefficients(self.r0, self.s, self.epsilon, self.n_modes)
        self.n_features_in_ = self.coeffs_.n_modes
        self.setup_ = MeasurementSetup(self.K, self.r1, self.mode)
        params = PhysicsParams(frequency=self.frequency, n_in=self.n_in, alpha_in=self.alpha_in)
        mesh = build_disk_mesh(default_mesh_config(h=self.h, r0=self.r0))
        self.solver_ = ForwardSolver(mesh, params)
        return self

    def transform(self, X):
        check_is_fitted(self, "solver_")
        Y = _check_coefficients(X, self.n_features_in_)
        return np.array([observe(self.solver_.solve(RadiusField(y, self.coeffs_)), self.setup_)
                         for y in Y])


class ShapeInversion(BaseEstimator):
    """Bayesian recovery of a star-shaped interface from ring measurements.

    ``fit(delta)`` runs tempered SMC from the uniform coefficient prior to the
    posterior. ``predict(angles)`` returns the posterior mean radius.

    Parameters
    ----------
    frequency : float
    n_in, alpha_in : float
    r0, s, epsilon : float
    n_modes : int or "auto95"
    K, r1, mode, h
        Measurement ring and mesh, as in :class:`MeasurementOperator`.
    noise_variance : float
        Isotropic noise level ``Sigma = noise_variance * I``.
    n_particles : int
    ess_factor : float
    random_state : int
    n_jobs : int
        Worker processes for the particle forward solves.
    forward : callable, optional
        Replaces the FEM forward map with ``forward(Y) -> (n, K)``.
    """

    def __init__(self, frequency=1.0e9, n_in=0.9, alpha_in=1.0, r0=0.01, s=0.1, epsilon=0.001,
                 n_modes="auto95", K=100, r1=0.06, mode="amplitude", h=0.00125,
                 noise_variance=0.01, n_particles=1000, ess_factor=1.0 / 1.1, random_state=0,
                 n_jobs=1, forward=None):
        self.frequency = frequency
        self.n_in = n_in
        self.alpha_in = alpha_in
        self.r0 = r0
        self.s = s
        self.epsilon = epsilon
        self.n_modes = n_modes
        self.K = K
        self.r1 = r1
        self.mode = mode
        self.h = h
        self.noise_variance = noise_variance
        self.n_particles = n_particles
        self.ess_factor = ess_factor
        self.random_state = random_state
        self.n_jobs = n_jobs
        self.forward = forward

    def _potential(self, delta, coeffs, noise):
        if self.forward is not None:
            return lambda Y: potential(self.forward(Y), delta, noise)
        op = MeasurementOperator(self.frequency, self.n_in, self.alpha_in, self.r0, self.s,
                                 self.epsilon, coeffs.n_modes, self.K, self.r1, self.mode,
                                 self.h).fit()
        return FemPotential(op.solver_, op.coeffs_, op.setup_, delta, noise, self.n_jobs)

    def fit(self, X, y=None):
        """Sample the posterior for the data vector ``X`` of length ``K``."""
        delta = check_array(X, ensure_2d=False, dtype=float).reshape(-1)
        if delta.size != self.K:
            raise ValueError(f"data has length {delta.size}, expected K={self.K}")
        coeffs = _coefficients(self.r0, self.s, self.epsilon, self.n_modes)
        noise = NoiseModel.isotropic(self.noise_variance, self.K)
        pot = CountingPotential(self._potential(delta, coeffs, noise))
        config = SmcConfig(n_particles=self.n_particles, ess_factor=self.ess_factor,
                           seed=int(self.random_state))
        try:
            self.result_ = run(config, coeffs.n_modes, pot)
        finally:
            close = getattr(pot.func, "close", None)
            if close is not None:
                close()
        self.coeffs_ = coeffs
        self.n_features_in_ = self.K
        self.particles_ = self.result_.particles.positions
        self.weights_ = self.result_.particles.weights
        self.posterior_mean_ = self.result_.particles.mean()
        self.posterior_cov_ = self.result_.particles.cov()
        self.forward_calls_ = pot.forward_calls
        return self

    def _radii(self, angles):
        check_is_fitted(self, "particles_")
        phi = np.asarray(angles, dtype=float).reshape(-1)
        return np.array([RadiusField(y, self.coeffs_).radius(phi) for y in self.particles_])

    def predict(self, angles):
        """Posterior mean radius at the given angles."""
        r = self._radii(angles)
        return self.weights_ @ r

    def predict_std(self, angles):
        """Posterior standard deviation of the radius at the given angles."""
        r = self._radii(angles)
        m = self.weights_ @ r
        return np.sqrt(np.maximum(self.weights_ @ (r - m) ** 2, 0.0))

    def prior_std(self, angles):
        return PriorSpec(self.coeffs_, 0).std_radius(np.asarray(angles, dtype=float))
