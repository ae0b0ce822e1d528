"""Gaussian potential, tempered increments and Hellinger distance estimates."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy.special import logsumexp

from .forward import ForwardSolver
from .mesh import build_disk_mesh
from .observe import MeasurementSetup, NoiseModel, observe
from .shape import CoefficientSequence, RadiusField


def potential(Gr, delta, noise: NoiseModel):
    """``Phi = 1/2 |Sigma^{-1/2} (delta - G(r))|^2``.

    ``Gr`` may hold one forward evaluation per row.
    """
    Gr = np.asarray(Gr, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if Gr.shape[-1] != delta.shape[-1] or delta.shape[-1] != noise.dim:
        raise ValueError(
            f"dimension mismatch: G has {Gr.shape[-1]}, data {delta.shape[-1]}, noise {noise.dim}"
        )
    w = noise.whiten(delta - Gr)
    return 0.5 * np.sum(w * w, axis=-1)


def tempered_log_increment(phi, T_lo, T_hi):
    """Log incremental weight ``-(T_hi - T_lo) Phi``."""
    if not 0.0 <= T_lo <= T_hi <= 1.0:
        raise ValueError(f"temperatures must satisfy 0 <= T_lo <= T_hi <= 1, got {T_lo}, {T_hi}")
    return -(T_hi - T_lo) * np.asarray(phi, dtype=float)


def _hellinger_squared(la, log_ratio):
    """Squared Hellinger distance between weights ``a`` and ``b = a exp(-D)``.

    ``la`` are log-weights of ``a`` and ``log_ratio`` is ``D = log(a / b)``.
    With normalized weights ``w ~ a`` and ``x = exp(-(D - E_w D) / 2)``,
    ``1 - E_w[x] / sqrt(E_w[x^2]) = Var_w(x) / (sqrt(E_w x^2)(sqrt(E_w x^2) + E_w x))``,
    which stays accurate for distances far below ``sqrt(machine epsilon)``.
    """
    la = np.asarray(la, dtype=float)
    D = np.asarray(log_ratio, dtype=float)
    finite = np.isfinite(la)
    if not finite.any():
        raise FloatingPointError("all weights underflow; use tempering or a larger noise covariance")
    w = np.exp(la - logsumexp(la[finite]))
    w[~finite] = 0.0
    with np.errstate(invalid="ignore"):
        lb = la - D
    if not np.isfinite(lb).any() or np.all(w[np.isfinite(D)] == 0):
        return 1.0
    centered = D - np.sum(w * D)
    # shift by the smallest exponent so exp never overflows; E[x]/sqrt(E[x^2]) is scale free
    shift = np.min(centered[w > 0])
    y = np.expm1(-0.5 * (centered - shift))
    ey = np.sum(w * y)
    var = np.sum(w * (y - ey) ** 2)
    ex = 1.0 + ey
    ex2 = var + ex * ex
    if not np.isfinite(ex2) or ex2 == 0:
        return 1.0
    return float(np.clip(var / (np.sqrt(ex2) * (np.sqrt(ex2) + ex)), 0.0, 1.0))


def hellinger_estimate(G, delta, delta_prime, noise: NoiseModel):
    """Hellinger distance between the posteriors for ``delta`` and ``delta_prime``.

    Self-normalized importance sampling with the prior as proposal:
    ``d^2 = 1 - mean(sqrt(a b)) / sqrt(mean(a) mean(b))`` with
    ``a_i = exp(-Phi(r_i; delta))`` and ``b_i = exp(-Phi(r_i; delta'))``.
    The estimator is consistent but biased for small ``M``.

    Parameters
    ----------
    G : (M, K) array_like
        Forward evaluations ``G(r_i)`` of a common set of prior samples.
    delta, delta_prime : (K,) array_like
    noise : NoiseModel

    Returns
    -------
    float
        Estimated distance, clamped to ``[0, 1]``.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    if G.shape[0] < 1:
        raise ValueError("at least one sample is required")
    d1 = np.asarray(delta, dtype=float)
    d2 = np.asarray(delta_prime, dtype=float)
    if np.array_equal(d1, d2):
        return 0.0
    phi_a = potential(G, d1, noise)
    la = -(phi_a - phi_a.min())
    w = np.exp(la - logsumexp(la))
    # log(a / b) = Phi(delta') - Phi(delta) = 1/2 (d' - d)^T S^-1 (d' + d - 2G); centering
    # G before whitening avoids cancellation when the data barely inform the shape
    wd = noise.whiten(d2 - d1)
    g_mean = w @ G
    base = 0.5 * np.sum(wd * noise.whiten(d2 + d1 - 2.0 * g_mean))
    D = base - np.sum(wd * noise.whiten(G - g_mean), axis=-1)
    return float(np.sqrt(_hellinger_squared(la, D)))


def hellinger_distance_weights(la, lb):
    """Hellinger distance between two self-normalized weight sets on shared samples."""
    la = np.asarray(la, dtype=float)
    with np.errstate(invalid="ignore"):
        D = la - np.asarray(lb, dtype=float)
    return float(np.sqrt(_hellinger_squared(la, D)))


_WORKER: dict = {}


def _init_worker(mesh_config, params, coeffs, setup):
    _WORKER["solver"] = ForwardSolver(build_disk_mesh(mesh_config), params)
    _WORKER["coeffs"] = coeffs
    _WORKER["setup"] = setup


def _forward_rows(Y):
    solver, coeffs, setup = _WORKER["solver"], _WORKER["coeffs"], _WORKER["setup"]
    return np.array([observe(solver.solve(RadiusField(y, coeffs)), setup) for y in Y])


class FemPotential:
    """Potential ``Phi(y)`` backed by FEM solves on a fixed reference mesh.

    Parameters
    ----------
    solver : ForwardSolver
    coeffs : CoefficientSequence
        Maps coefficient vectors ``y`` to radii.
    setup : MeasurementSetup
    delta : (K,) array_like
    noise : NoiseModel
    n_workers : int
        Worker processes for batches; ``1`` evaluates in-process. Each
        worker rebuilds its own solver once, so no mutable state is shared.
    """

    def __init__(self, solver: ForwardSolver, coeffs: CoefficientSequence, setup: MeasurementSetup,
                 delta, noise: NoiseModel, n_workers=1):
        self.solver = solver
        self.coeffs = coeffs
        self.setup = setup
        self.delta = np.asarray(delta, dtype=float)
        self.noise = noise
        if self.delta.size != setup.K or noise.dim != setup.K:
            raise ValueError(f"data ({self.delta.size}) and noise ({noise.dim}) must have length K={setup.K}")
        self.n_workers = int(n_workers)
        self.n_solves = 0
        self._pool = None

    def forward(self, Y):
        """``G(y)`` for each row of ``Y``."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        self.n_solves += Y.shape[0]
        if self.n_workers <= 1 or Y.shape[0] < 2:
            return np.array([observe(self.solver.solve(RadiusField(y, self.coeffs)), self.setup)
                             for y in Y])
        if self._pool is None:
            self._pool = ProcessPoolExecutor(
                self.n_workers, initializer=_init_worker,
                initargs=(self.solver.mesh.config, self.solver.params, self.coeffs, self.setup))
        chunks = np.array_split(Y, min(self.n_workers * 4, Y.shape[0]))
        return np.vstack(list(self._pool.map(_forward_rows, chunks)))

    def __call__(self, Y):
        return potential(self.forward(Y), self.delta, self.noise)

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
