"""Bayesian shape inversion for time-harmonic acoustic transmission scattering.

Modules
-------
shape     radius prior and star-shape constants
mesh      structured disk meshes with a PML annulus
forward   P1 finite elements with domain mapping
observe   ring measurements and synthetic data
bayes     potentials and Hellinger distances
smc       tempered sequential Monte Carlo
bounds    explicit stability constants
cli       command line interface
"""

from .bounds import GeometrySummary, corollary_constants, stability_constant, verify_forward_bound
from .config import ConfigError, RunConfig
from .estimator import MeasurementOperator, ShapeInversion
from .forward import ForwardSolver, PhysicsParams, build_solver, weighted_norm
from .observe import DataVector, MeasurementSetup, NoiseModel, generate_data
from .shape import PriorSpec, RadiusField, sample_prior, whittle_matern_coeffs
from .smc import SmcConfig, run

__all__ = [
    "GeometrySummary", "corollary_constants", "stability_constant", "verify_forward_bound",
    "ConfigError", "RunConfig", "MeasurementOperator", "ShapeInversion", "ForwardSolver",
    "PhysicsParams", "build_solver", "weighted_norm", "DataVector", "MeasurementSetup",
    "NoiseModel", "generate_data", "PriorSpec", "RadiusField", "sample_prior",
    "whittle_matern_coeffs", "SmcConfig", "run",
]
