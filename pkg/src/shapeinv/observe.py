"""Point measurements of the total field on a ring and synthetic data."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .forward import FieldSolution, ForwardSolver, total_field_at
from .shape import RadiusField

MODES = ("amplitude", "real-part")


@dataclass(frozen=True)
class MeasurementSetup:
    """``K`` points on the circle of radius ``r1``; ``mode`` selects ``|u|`` or ``Re u``."""

    K: int = 100
    r1: float = 0.06
    mode: str = "amplitude"

    def __post_init__(self):
        if int(self.K) < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if not self.r1 > 0:
            raise ValueError("r1 must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    def validate_geometry(self, max_shape_radius, R):
        """Check ``(1 + gamma_beta) r0 < r1 < R``."""
        if not max_shape_radius < self.r1 < R:
            raise ValueError(
                f"measurement radius r1={self.r1} must satisfy {max_shape_radius} < r1 < R={R}"
            )


class NoiseModel:
    """Gaussian noise with covariance ``Sigma``.

    Parameters
    ----------
    cov : (K, K) array_like
        Symmetric positive definite covariance.
    """

    def __init__(self, cov):
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        if cov.shape[0] != cov.shape[1]:
            raise ValueError("covariance must be square")
        scale = max(np.abs(cov).max(), np.finfo(float).tiny)
        if np.abs(cov - cov.T).max() > 1e-12 * scale:
            raise ValueError("covariance must be symmetric")
        w, v = np.linalg.eigh(cov)
        if w.min() <= 0:
            raise ValueError(f"covariance must be positive definite (min eigenvalue {w.min():.3g})")
        self.cov = cov
        self.lambda_min = float(w.min())
        self.inv_sqrt = (v / np.sqrt(w)) @ v.T
        self.sqrt = (v * np.sqrt(w)) @ v.T

    @classmethod
    def isotropic(cls, variance, K):
        return cls(variance * np.eye(K))

    @property
    def dim(self):
        return self.cov.shape[0]

    def whiten(self, r):
        """``Sigma^{-1/2} r`` (works on the last axis)."""
        return np.asarray(r) @ self.inv_sqrt.T

    def sample(self, rng, size=None):
        z = rng.standard_normal((self.dim,) if size is None else (size, self.dim))
        return z @ self.sqrt.T

    def spec(self):
        """Compact description used in data files and manifests."""
        diag = np.diag(self.cov)
        if np.allclose(self.cov, np.diag(diag)) and np.allclose(diag, diag[0]):
            return {"type": "isotropic", "variance": float(diag[0])}
        return {"type": "full", "matrix": self.cov.tolist()}


def measurement_points(setup: MeasurementSetup):
    """``x_i = r1 (cos(2 pi i / K), sin(2 pi i / K))`` for ``i = 1..K``."""
    i = np.arange(1, setup.K + 1)
    th = 2.0 * np.pi * i / setup.K
    return setup.r1 * np.column_stack([np.cos(th), np.sin(th)])


def observe(sol: FieldSolution, setup: MeasurementSetup):
    """Apply the observation operator to a field solution."""
    u = total_field_at(sol, measurement_points(setup))
    return np.abs(u) if setup.mode == "amplitude" else u.real


def forward_map(field: RadiusField | None, params, setup: MeasurementSetup, solver: ForwardSolver):
    """``G(r)``: forward solve followed by point observation."""
    if params is not None and params != solver.params:
        raise ValueError("solver was built for different physical parameters")
    return observe(solver.solve(field), setup)


@dataclass
class DataVector:
    """Observed data ``delta`` and its provenance."""

    delta: np.ndarray
    K: int
    r1: float
    mode: str
    truth_seed: int | None = None
    noise_seed: int | None = None
    sigma_spec: dict = field(default_factory=dict)
    truth_y: list | None = None

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=float).reshape(-1)
        if self.delta.size != self.K:
            raise ValueError(f"data length {self.delta.size} does not match K={self.K}")
        if not np.all(np.isfinite(self.delta)):
            raise ValueError("data must be finite")

    def to_json(self):
        d = asdict(self)
        d["delta"] = [float(x) for x in self.delta]
        if d["truth_y"] is None:
            d.pop("truth_y")
        return json.dumps(d, indent=2)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(**d)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())


def generate_data(truth: RadiusField | None, noise: NoiseModel | None, seeds, params=None,
                  setup: MeasurementSetup | None = None, solver: ForwardSolver | None = None,
                  clean=None):
    """Synthetic data ``delta = G(r_true) + Sigma^{1/2} z``.

    Parameters
    ----------
    truth : RadiusField
    noise : NoiseModel or None
        ``None`` returns the noise-free data.
    seeds : (truth_seed, noise_seed)
        ``truth_seed`` is provenance only; ``noise_seed`` drives ``z``.
    clean : ndarray, optional
        Precomputed ``G(r_true)``; skips the forward solve.
    """
    truth_seed, noise_seed = seeds
    setup = MeasurementSetup() if setup is None else setup
    g = forward_map(truth, params, setup, solver) if clean is None else np.asarray(clean, dtype=float)
    delta = g.copy()
    spec = {"type": "none"}
    if noise is not None:
        if noise.dim != setup.K:
            raise ValueError(f"noise dimension {noise.dim} does not match K={setup.K}")
        delta = g + noise.sample(np.random.default_rng(noise_seed))
        spec = noise.spec()
    y = None if truth is None else [float(v) for v in truth.y]
    return DataVector(delta, setup.K, setup.r1, setup.mode, truth_seed, noise_seed, spec, y)
