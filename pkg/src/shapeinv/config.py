"""Run configuration: JSON schema, defaults, validation and object factories."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .forward import PhysicsParams, default_mesh_config
from .mesh import C_LIGHT, pollution_mesh_size
from .observe import MODES, MeasurementSetup, NoiseModel
from .shape import PriorSpec, truncation_level, whittle_matern_coeffs
from .smc import RESAMPLING, SmcConfig


class ConfigError(ValueError):
    """Invalid configuration; the message names the violated constraint."""


@dataclass
class PhysicsSection:
    frequency: float = 1.0e9
    kappa: float | None = None
    c: float = C_LIGHT
    alpha_in: float = 1.0
    alpha_out: float = 1.0
    n_in: float = 0.9
    n_out: float = 1.0
    dim: int = 2
    direction: list = field(default_factory=lambda: [1.0, 0.0])
    sigma_pml: float = 1.0e5


@dataclass
class PriorSection:
    r0: float = 0.01
    s: float = 0.1
    epsilon: float = 0.001
    J: int | str = "auto95"
    seed: int = 0


@dataclass
class GeometrySection:
    h: float = 0.00125
    mesh_rule: str = "fixed"
    reference_frequency: float = 1.0e9
    rho_a: float | None = None
    R_map: float | None = None
    R: float = 0.07
    R_PML: float = 0.11
    R_scatt: float | None = None


@dataclass
class MeasurementSection:
    K: int = 100
    r1: float = 0.06
    mode: str = "amplitude"


@dataclass
class NoiseSection:
    variance: float = 0.01
    matrix: list | None = None
    enabled: bool = True
    seed: int = 1


@dataclass
class TruthSection:
    seed: int = 2
    y: list | None = None


@dataclass
class SmcSection:
    n_particles: int = 1000
    ess_factor: float = 1.0 / 1.1
    min_steps: int = 2
    max_steps: int = 25
    resampling: str = "multinomial"
    seed: int = 0


@dataclass
class BoundsSection:
    n_shapes: int = 20
    kappa_multipliers: list = field(default_factory=lambda: [1.0, 2.0, 4.0])
    slack: float = 0.05
    gamma: float | None = None


@dataclass
class OutputSection:
    dir: str = "out"


SECTIONS = {
    "physics": PhysicsSection,
    "prior": PriorSection,
    "geometry": GeometrySection,
    "measurement": MeasurementSection,
    "noise": NoiseSection,
    "truth": TruthSection,
    "smc": SmcSection,
    "bounds": BoundsSection,
    "output": OutputSection,
}


def _section_from(cls, name, data):
    if not isinstance(data, dict):
        raise ConfigError(f"section '{name}' must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{name}': {', '.join(unknown)}")
    return cls(**data)


@dataclass
class RunConfig:
    """Complete, validated description of a run.

    Every field has a default; a JSON file only needs the overrides. Unknown
    sections or keys are rejected.
    """

    physics: PhysicsSection = field(default_factory=PhysicsSection)
    prior: PriorSection = field(default_factory=PriorSection)
    geometry: GeometrySection = field(default_factory=GeometrySection)
    measurement: MeasurementSection = field(default_factory=MeasurementSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    truth: TruthSection = field(default_factory=TruthSection)
    smc: SmcSection = field(default_factory=SmcSection)
    bounds: BoundsSection = field(default_factory=BoundsSection)
    output: OutputSection = field(default_factory=OutputSection)

    # -- serialization -----------------------------------------------------
    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        unknown = sorted(set(data) - set(SECTIONS))
        if unknown:
            raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
        try:
            cfg = cls(**{k: _section_from(SECTIONS[k], k, v) for k, v in data.items()})
            cfg.validate()
        except TypeError as exc:
            # wrong value types surface as comparison errors
            raise ConfigError(f"invalid value type: {exc}") from exc
        return cfg

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def resolved(self):
        """Copy with derived values (``J``, ``h``) materialized."""
        prior = replace(self.prior, J=self.n_modes)
        geom = replace(self.geometry, h=self.mesh_size, mesh_rule="fixed")
        return replace(self, prior=prior, geometry=geom)

    def with_seed(self, seed):
        """Override every seed from one integer, keeping the streams distinct."""
        ss = np.random.SeedSequence(seed).generate_state(4)
        return replace(
            self,
            prior=replace(self.prior, seed=int(ss[0])),
            noise=replace(self.noise, seed=int(ss[1])),
            truth=replace(self.truth, seed=int(ss[2])),
            smc=replace(self.smc, seed=int(ss[3])),
        )

    # -- validation --------------------------------------------------------
    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        ph, pr, ge, me, no, sm = (self.physics, self.prior, self.geometry, self.measurement,
                                  self.noise, self.smc)
        need(ph.dim == 2, "physics.dim: only d = 2 is supported by the solver")
        for name in ("alpha_in", "alpha_out", "n_in", "n_out", "c"):
            need(getattr(ph, name) > 0, f"physics.{name} must be positive")
        need(ph.kappa is not None or ph.frequency > 0, "physics.frequency must be positive")
        need(ph.kappa is None or ph.kappa > 0, "physics.kappa must be positive")
        need(ph.sigma_pml >= 0, "physics.sigma_pml must be non-negative")
        need(len(ph.direction) == 2 and abs(np.hypot(*ph.direction) - 1) < 1e-12,
             "physics.direction must be a unit 2-vector")
        need(pr.r0 > 0, "prior.r0 must be positive")
        need(pr.s > 0, "prior.s must be positive")
        need(pr.epsilon > 0, "prior.epsilon must be positive")
        need(pr.J == "auto95" or (isinstance(pr.J, int) and pr.J >= 1),
             "prior.J must be a positive integer or 'auto95'")
        need(ge.h > 0, "geometry.h must be positive")
        need(ge.mesh_rule in ("fixed", "pollution"), "geometry.mesh_rule must be 'fixed' or 'pollution'")
        need(ge.reference_frequency > 0, "geometry.reference_frequency must be positive")
        need(0 < ge.R < ge.R_PML, "geometry: need 0 < R < R_PML")
        gb = 0.5
        r_plus = (1 + gb) * pr.r0
        need(r_plus < ge.R, f"geometry.R must exceed the largest scatterer radius {r_plus}")
        rho_a = 0.25 * (1 - gb) * pr.r0 if ge.rho_a is None else ge.rho_a
        R_map = 0.5 * (r_plus + ge.R) if ge.R_map is None else ge.R_map
        need(0 < rho_a < (1 - gb) * pr.r0,
             f"geometry.rho_a must lie in (0, (1 - gamma_beta) r0) = (0, {(1 - gb) * pr.r0})")
        need(r_plus < R_map < ge.R,
             f"geometry.R_map must lie in ((1 + gamma_beta) r0, R) = ({r_plus}, {ge.R})")
        need(ge.R_scatt is None or r_plus < ge.R_scatt < ge.R,
             f"geometry.R_scatt must lie in ({r_plus}, {ge.R})")
        need(me.K >= 1, "measurement.K must be >= 1")
        need(me.mode in MODES, f"measurement.mode must be one of {MODES}")
        need(R_map < me.r1 < ge.R,
             f"measurement.r1 must lie in (R_map, R) = ({R_map}, {ge.R}) so observations are unmapped")
        need(no.variance > 0 or no.matrix is not None or not no.enabled,
             "noise.variance must be positive")
        if no.matrix is not None:
            m = np.asarray(no.matrix, dtype=float)
            need(m.shape == (me.K, me.K), f"noise.matrix must be {me.K} x {me.K}")
            try:
                NoiseModel(m)
            except ValueError as exc:
                raise ConfigError(f"noise.matrix: {exc}") from exc
        need(sm.n_particles >= 2, "smc.n_particles must be >= 2")
        need(0 < sm.ess_factor < 1, "smc.ess_factor must lie in (0, 1)")
        need(1 <= sm.min_steps <= sm.max_steps, "smc: need 1 <= min_steps <= max_steps")
        need(sm.resampling in RESAMPLING, f"smc.resampling must be one of {RESAMPLING}")
        need(self.bounds.n_shapes >= 1, "bounds.n_shapes must be >= 1")
        need(all(m > 0 for m in self.bounds.kappa_multipliers), "bounds.kappa_multipliers must be positive")
        need(self.bounds.slack >= 0, "bounds.slack must be non-negative")
        if self.truth.y is not None:
            need(len(self.truth.y) == self.n_modes, f"truth.y must have J = {self.n_modes} entries")
            need(all(abs(v) <= 1 for v in self.truth.y), "truth.y entries must lie in [-1, 1]")
        return self

    # -- factories ---------------------------------------------------------
    @property
    def n_modes(self):
        if self.prior.J != "auto95":
            return int(self.prior.J)
        probe = whittle_matern_coeffs(self.prior.r0, self.prior.s, self.prior.epsilon, 1)
        return truncation_level(probe)

    def coefficients(self):
        return whittle_matern_coeffs(self.prior.r0, self.prior.s, self.prior.epsilon, self.n_modes)

    def prior_spec(self):
        return PriorSpec(self.coefficients(), self.prior.seed)

    def physics_params(self, kappa_multiplier=1.0):
        ph = self.physics
        p = PhysicsParams(ph.frequency, ph.c, ph.alpha_in, ph.alpha_out, ph.n_in, ph.n_out,
                          tuple(ph.direction), ph.sigma_pml, ph.dim, ph.kappa)
        return p if kappa_multiplier == 1.0 else p.with_kappa(p.kappa0 * kappa_multiplier)

    @property
    def mesh_size(self):
        ge = self.geometry
        if ge.mesh_rule == "fixed":
            return ge.h
        k_ref = 2 * np.pi * ge.reference_frequency / self.physics.c
        return pollution_mesh_size(ge.h, k_ref, self.physics_params().kappa0)

    def mesh_config(self, h=None):
        ge = self.geometry
        return default_mesh_config(self.mesh_size if h is None else h, self.prior.r0, ge.R, ge.R_PML,
                                   0.5, ge.rho_a, ge.R_map)

    def measurement_setup(self):
        return MeasurementSetup(self.measurement.K, self.measurement.r1, self.measurement.mode)

    def noise_model(self):
        if not self.noise.enabled:
            return None
        if self.noise.matrix is not None:
            return NoiseModel(np.asarray(self.noise.matrix, dtype=float))
        return NoiseModel.isotropic(self.noise.variance, self.measurement.K)

    def smc_config(self):
        s = self.smc
        return SmcConfig(n_particles=s.n_particles, ess_factor=s.ess_factor, max_steps=s.max_steps,
                         min_steps=s.min_steps, resampling=s.resampling, seed=s.seed)
