"""Explicit wavenumber-dependent stability constants and their numerical verification.

All constants are closed-form functions of the physical parameters, the
hold-all geometry of the prior and a few norms of the incident wave. For a
plane wave ``|u^i| = 1`` and ``|grad u^i| = k_out`` pointwise, so its Lebesgue
norms reduce to areas; :func:`incident_norms_quadrature` evaluates the same
norms for arbitrary incident fields and serves as a cross-check.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .forward import PhysicsParams, _reference_geometry, weighted_norm
from .mesh import INTERIOR, PML, Mesh, locate_points
from .shape import CoefficientSequence, RadiusField, star_shape_constant


@dataclass(frozen=True)
class GeometrySummary:
    """Radii and hold-all quantities entering the constants.

    Parameters
    ----------
    r0 : float
        Nominal (constant) radius.
    gamma_beta : float
        Relative amplitude bound of the radius perturbation.
    R : float
        Radius of the ball ``B_R`` on which norms are measured.
    R_scatt : float, optional
        Cut-off radius for the incident-wave splitting. Defaults to ``R / 2``.
    R_PML : float, optional
        Outer PML radius (informational).
    dim : int
    """

    r0: float
    gamma_beta: float
    R: float
    R_scatt: float | None = None
    R_PML: float | None = None
    dim: int = 2

    def __post_init__(self):
        if not 0.0 < self.gamma_beta < 1.0:
            raise ValueError(f"gamma_beta must lie in (0, 1), got {self.gamma_beta}")
        if not self.r0 > 0:
            raise ValueError("r0 must be positive")
        if self.R_scatt is None:
            object.__setattr__(self, "R_scatt", 0.5 * self.R)
        if not self.R_scatt > self.r_plus:
            raise ValueError(
                f"R_scatt={self.R_scatt} must exceed (1 + gamma_beta) r0 = {self.r_plus}"
            )
        if not self.R > self.R_scatt:
            raise ValueError(f"R={self.R} must exceed R_scatt={self.R_scatt}")
        if self.R_PML is not None and not self.R_PML > self.R:
            raise ValueError("R_PML must exceed R")

    @classmethod
    def from_prior(cls, coeffs: CoefficientSequence, R, R_scatt=None, R_PML=None, dim=2):
        return cls(coeffs.r0, coeffs.gamma_beta, R, R_scatt, R_PML, dim)

    @property
    def r_minus(self):
        """Inner radius of the tube ``U`` that holds every boundary realization."""
        return (1.0 - self.gamma_beta) * self.r0

    @property
    def r_plus(self):
        return (1.0 + self.gamma_beta) * self.r0

    @property
    def tube(self):
        return self.r_minus, self.r_plus

    @property
    def diam_max(self):
        """Upper bound ``2 (1 + gamma_beta) r0`` on ``diam(D_in)``."""
        return 2.0 * self.r_plus

    @property
    def diam_core(self):
        """``diam(D_in,H minus U) = 2 (1 - gamma_beta) r0``."""
        return 2.0 * self.r_minus

    @property
    def gamma_tilde(self):
        return star_shape_constant(self.dim, self.gamma_beta, self.r0, self.r0)

    @property
    def gamma_hat(self):
        return min(0.5, self.gamma_tilde)

    @property
    def c_surf(self):
        """Upper bound on ``|Gamma|^{1/2}``.

        Uses ``r <= (1 + gamma_beta) r0`` and ``|r'| <= gamma_beta r0``, the
        latter because the basis derivatives are bounded by the coefficients.
        """
        if self.dim != 2:
            raise NotImplementedError("surface bound is implemented for d = 2")
        g = self.gamma_beta
        return float(np.sqrt(2.0 * np.pi * self.r0 * np.hypot(1.0 + g, g)))


@dataclass
class BoundReport:
    """Constants for one parameter set and, optionally, one measured solution."""

    kappa0: float
    constants: dict = field(default_factory=dict)
    lhs: float | None = None
    rhs: float | None = None
    slack: float = 0.05
    seed: int | None = None

    @property
    def ratio(self):
        if self.lhs is None or self.rhs is None:
            return None
        return self.lhs / self.rhs

    @property
    def passed(self):
        if self.lhs is None:
            return None
        return bool(self.lhs <= self.rhs * (1.0 + self.slack))

    def as_row(self):
        row = {"kappa0": self.kappa0, "seed": self.seed}
        row.update(self.constants)
        row.update(lhs=self.lhs, rhs=self.rhs, ratio=self.ratio, passed=self.passed)
        return row

    def to_dict(self):
        d = asdict(self)
        d.update(ratio=self.ratio, passed=self.passed)
        return d


# ---------------------------------------------------------------------------
# closed forms


def _bracket_out(params: PhysicsParams, R):
    """``4/alpha_out + (1/n_out)(2 sqrt(n_out/alpha_out) + (d-1)/(kappa0 R))^2``."""
    k = params.kappa0
    inner = 2.0 * np.sqrt(params.n_out / params.alpha_out) + (params.dim - 1) / (k * R)
    return 4.0 / params.alpha_out + inner**2 / params.n_out


def _bracket_in(params: PhysicsParams, R, diam):
    """``4 (kappa0 diam)^2 / alpha_in + (kappa0 R)^2 / n_in (...)^2`` (dimensionless)."""
    k = params.kappa0
    inner = 2.0 * np.sqrt(params.n_out / params.alpha_out) + (params.dim - 1) / (k * R)
    return 4.0 * (k * diam) ** 2 / params.alpha_in + (k * R) ** 2 / params.n_in * inner**2


def c_kappa(params: PhysicsParams, R):
    return float(R * np.sqrt(_bracket_out(params, R)))


def corollary_constants(params: PhysicsParams, geom: GeometrySummary):
    """``(C_kappa0, C1, C2)`` of the scattered-field bound.

    ``C1 = 3 / (2 R_scatt (R - R_scatt))`` and
    ``C2 = 6 / (R - R_scatt)^2 + 3 (d - 1) / (2 R_scatt (R - R_scatt))``.
    """
    R, Rs = geom.R, geom.R_scatt
    if not R > Rs > 0:
        raise ValueError(f"need R > R_scatt > 0, got R={R}, R_scatt={Rs}")
    gap = R - Rs
    c1 = 1.5 / (Rs * gap)
    c2 = 6.0 / gap**2 + 1.5 * (params.dim - 1) / (Rs * gap)
    return c_kappa(params, R), float(c1), float(c2)


def theorem41_rhs(params: PhysicsParams, geom: GeometrySummary, f_in_norm, f_out_norm, diam=None):
    """Bound on the squared weighted norm for volume sources with no interface jumps.

    ``diam`` defaults to the hold-all bound ``2 (1 + gamma_beta) r0``.
    """
    diam = geom.diam_max if diam is None else diam
    k = params.kappa0
    t_in = _bracket_in(params, geom.R, diam) * f_in_norm**2 / k**2
    t_out = geom.R**2 * _bracket_out(params, geom.R) * f_out_norm**2
    return float(t_in + t_out)


def theorem42_rhs(params: PhysicsParams, geom: GeometrySummary, gamma_hat, grad_gd_norm=0.0,
                  gd_norm=0.0, gn_norm=0.0, f_in_norm=0.0, f_out_norm=0.0, diam=None):
    """Bound on the squared weighted norm including interface jump data.

    Requires ``n_in / n_out < 1 < alpha_in / alpha_out`` and
    ``0 < gamma_hat <= 1/2``.
    """
    if not params.strict_chain:
        raise ValueError(
            "bound requires n_in/n_out < 1 < alpha_in/alpha_out, got "
            f"n_in/n_out={params.n_in / params.n_out}, alpha_in/alpha_out={params.alpha_in / params.alpha_out}"
        )
    if not 0.0 < gamma_hat <= 0.5:
        raise ValueError(f"gamma_hat must lie in (0, 1/2], got {gamma_hat}")
    diam = geom.diam_max if diam is None else diam
    a_in, a_out, n_in, n_out = params.alpha_in, params.alpha_out, params.n_in, params.n_out
    k, R, d, g = params.kappa0, geom.R, params.dim, gamma_hat
    far = n_out * (k * R) ** 2 + a_out * (d - 1) ** 2 / 4.0
    base = theorem41_rhs(params, geom, f_in_norm, f_out_norm, diam)
    t_grad = 2.0 * diam * a_out * ((3 + 2 * g) * a_in + 2 * a_out) / (g * (a_in - a_out))
    t_gd = 2.0 * (2 * k**2 * diam * n_out**2 / (g * (n_out - n_in))
                  + (3 + g) * a_in * far / (g * diam * (a_in - a_out)))
    t_gn = 2.0 / (g * a_out) * (diam * (4 * a_in + 2 * a_out) / (a_in - a_out)
                                + 2.0 * far / (k**2 * diam * (n_out - n_in)))
    return float(base + t_grad * grad_gd_norm**2 + t_gd * gd_norm**2 + t_gn * gn_norm**2)


@dataclass(frozen=True)
class IncidentNorms:
    """Norms of the incident wave used by the constants.

    ``l2_out`` and ``grad_out`` live on the exterior part of ``B_R``; ``h1``
    is the weighted norm over ``D_in`` and ``D_R``; ``l2_in`` lives on the
    hold-all scatterer ``D_in,H``; ``c1_tube`` is ``sup|u| + sup|grad u|``
    over the tube ``U``.
    """

    l2_out: float
    grad_out: float
    h1: float
    l2_in: float = 0.0
    c1_tube: float = 0.0


def plane_wave_norms(params: PhysicsParams, R, inner_area, hold_all_radius=None):
    """Closed-form norms of a unit plane wave.

    Parameters
    ----------
    R : float
    inner_area : float
        Area of the scatterer. For the realization-independent constant pass
        the area of the smallest scatterer, ``pi r_minus^2``.
    hold_all_radius : float, optional
        Radius of the hold-all scatterer for ``l2_in``.
    """
    k = params.k_out
    a_out = np.pi * R**2 - inner_area
    if a_out <= 0:
        raise ValueError("scatterer area exceeds the ball B_R")
    h1_sq = ((params.alpha_in * k**2 + params.kappa0**2 * params.n_in) * inner_area
             + (params.alpha_out * k**2 + params.kappa0**2 * params.n_out) * a_out)
    l2_in = 0.0 if hold_all_radius is None else np.sqrt(np.pi) * hold_all_radius
    return IncidentNorms(float(np.sqrt(a_out)), float(k * np.sqrt(a_out)), float(np.sqrt(h1_sq)),
                         float(l2_in), float(1.0 + k))


def hold_all_norms(params: PhysicsParams, geom: GeometrySummary, inner_area=None):
    """Realization-independent incident norms for the default hold-all geometry.

    The hold-all exterior ``D_out,H`` is ``B_R`` minus the disk of radius
    ``r_minus``. The weighted ``H^1`` norm is maximized over the scatterer
    area; since the integrand is affine in the area the maximum sits at an
    endpoint of ``[pi r_minus^2, pi r_plus^2]``.
    """
    small = np.pi * geom.r_minus**2 if inner_area is None else inner_area
    base = plane_wave_norms(params, geom.R, small, geom.r_plus)
    h1 = max(base.h1, plane_wave_norms(params, geom.R, np.pi * geom.r_plus**2).h1)
    return IncidentNorms(base.l2_out, base.grad_out, h1, base.l2_in, base.c1_tube)


def incident_norms_quadrature(params: PhysicsParams, R, radius, n_radial=64, n_angle=256,
                              incident=None):
    """Quadrature of the incident-wave norms over a star-shaped geometry.

    ``radius`` is a callable ``phi -> r(phi)`` describing the scatterer. Gauss
    points are used in the radial direction on each side of the interface and
    the trapezoidal rule in angle (spectrally accurate for periodic
    integrands).
    """
    incident = params.incident if incident is None else incident
    phi = np.linspace(0.0, 2 * np.pi, n_angle, endpoint=False)
    w_phi = 2 * np.pi / n_angle
    r_b = np.asarray(radius(phi), dtype=float)
    t, wt = np.polynomial.legendre.leggauss(n_radial)
    t, wt = 0.5 * (t + 1), 0.5 * wt
    out = {}
    for name, lo, hi in (("in", np.zeros_like(r_b), r_b), ("out", r_b, np.full_like(r_b, R))):
        rho = lo[:, None] + (hi - lo)[:, None] * t[None, :]
        w = (hi - lo)[:, None] * wt[None, :] * rho * w_phi
        x = np.stack([rho * np.cos(phi)[:, None], rho * np.sin(phi)[:, None]], axis=-1)
        u, g = incident(x)
        out[name] = (np.sum(w * np.abs(u) ** 2), np.sum(w * np.sum(np.abs(g) ** 2, axis=-1)))
    (u_in, g_in), (u_out, g_out) = out["in"], out["out"]
    h1 = np.sqrt(params.alpha_in * g_in + params.kappa0**2 * params.n_in * u_in
                 + params.alpha_out * g_out + params.kappa0**2 * params.n_out * u_out)
    return IncidentNorms(float(np.sqrt(u_out)), float(np.sqrt(g_out)), float(h1), float(np.sqrt(u_in)))


def corollary_rhs(params: PhysicsParams, geom: GeometrySummary, norms: IncidentNorms):
    """Right-hand side of the scattered-field bound."""
    ck, c1, c2 = corollary_constants(params, geom)
    a = params.alpha_out
    return float(ck * c1 * a * norms.grad_out + (ck * c2 * a + np.sqrt(a) * c1) * norms.l2_out + norms.h1)


def _check_lambda(lambda_min):
    if not lambda_min > 0:
        raise ValueError(f"lambda_min must be positive, got {lambda_min}")


def stability_constant(params: PhysicsParams, geom: GeometrySummary, lambda_min, gamma,
                       obs_norm, norms: IncidentNorms | None = None):
    """Data-stability constant ``C_{gamma,G}`` and its plane-wave proxy.

    Parameters
    ----------
    lambda_min : float
        Smallest eigenvalue of the noise covariance.
    gamma : float
        Bound on the data norms ``|delta|``.
    obs_norm : float
        Euclidean norm of the vector of observation functional norms.
    norms : IncidentNorms, optional
        Defaults to :func:`hold_all_norms`.

    Returns
    -------
    (float, float)
        ``C_{gamma,G}`` and ``gamma / lambda_min + obs_norm kappa0 R / lambda_min``.
    """
    _check_lambda(lambda_min)
    norms = hold_all_norms(params, geom) if norms is None else norms
    c = (gamma + obs_norm * corollary_rhs(params, geom, norms)) / lambda_min
    proxy = (gamma + obs_norm * params.kappa0 * geom.R) / lambda_min
    return float(c), float(proxy)


def suboptimal_stability_constant(params: PhysicsParams, geom: GeometrySummary, lambda_min, gamma,
                                  obs_norm, norms: IncidentNorms | None = None):
    """Contrast-explicit (wavenumber-suboptimal) variant of ``C_{gamma,G}``.

    The contrast factor ``alpha_in/alpha_out n_in - n_out`` enters through its
    absolute value.
    """
    if not params.strict_chain:
        raise ValueError("requires n_in/n_out < 1 < alpha_in/alpha_out")
    _check_lambda(lambda_min)
    norms = hold_all_norms(params, geom) if norms is None else norms
    a_in, a_out, n_in, n_out = params.alpha_in, params.alpha_out, params.n_in, params.n_out
    k, R, d = params.kappa0, geom.R, params.dim
    diam, core, g = geom.diam_max, geom.diam_core, geom.gamma_hat
    contrast = abs(a_in / a_out * n_in - n_out)
    vol = np.sqrt(_bracket_in(params, R, diam)) * k * contrast * norms.l2_in
    far = n_out * (k * R) ** 2 + a_out * (d - 1) ** 2 / 4.0
    jump = np.sqrt(diam * (4 * a_in + 2 * a_out) / (a_in - a_out)
                   + 2.0 * far / (k**2 * core * (n_out - n_in)))
    jump *= 2.0 * geom.c_surf * (a_in - a_out) / (g * a_out) * norms.c1_tube
    return float((gamma + obs_norm * (vol + jump)) / lambda_min)


def soundsoft_constants(params: PhysicsParams, geom: GeometrySummary, n_max, mu_n, diam=None):
    """``(C1, C2, C3)`` for the sound-soft obstacle problem.

    Requires ``R >= sqrt(3/8) / kappa0`` and ``mu_n > 0``.
    """
    k, R, d = params.kappa0, geom.R, params.dim
    threshold = np.sqrt(3.0 / 8.0) / k
    if R < threshold:
        raise ValueError(f"R={R} is below the threshold sqrt(3/8)/kappa0 = {threshold:.6g}")
    if not mu_n > 0:
        raise ValueError("mu_n must be positive")
    if not n_max > 0:
        raise ValueError("n_max must be positive")
    diam = geom.diam_max if diam is None else diam
    gt, cs = geom.gamma_tilde, geom.c_surf
    kr = k * R
    growth = 1.0 + 1.5 * n_max
    lead = (2.0 + (d - 2) / (2.0 * kr)) ** 2
    c1 = 2.0 * np.sqrt(4.0 * kr**2 / mu_n**2 * (1.0 + lead) * growth**2 + 2.0 / n_max)
    c2 = cs * np.sqrt(2.0 / mu_n) * np.sqrt(growth) * np.sqrt(diam) * np.sqrt(1.0 + 4.0 * diam / gt)
    c3 = 2.0 * cs * np.sqrt(8.0 / mu_n * growth * kr**2 / gt * lead + 2.0 / gt)
    return float(c1), float(c2), float(c3)


# ---------------------------------------------------------------------------
# observation functionals


def _gram_matrix(mesh: Mesh, params: PhysicsParams):
    """Weighted ``H^1`` Gram matrix of the P1 space on ``B_R`` (reference geometry)."""
    keep = mesh.tags != PML
    area, grad, _ = _reference_geometry(mesh)
    tri = mesh.triangles[keep]
    area, grad = area[keep], grad[keep]
    inside = mesh.tags[keep] == INTERIOR
    alpha = np.where(inside, params.alpha_in, params.alpha_out)
    nref = np.where(inside, params.n_in, params.n_out)
    stiff = np.einsum("tdi,tdj->tij", grad, grad) * (alpha * area)[:, None, None]
    mass = (np.ones((3, 3)) + np.eye(3)) / 12.0
    elem = stiff + params.kappa0**2 * (nref * area)[:, None, None] * mass
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = mesh.n_vertices
    G = sp.csc_matrix((elem.ravel(), (rows, cols)), shape=(n, n))
    used = np.unique(tri)
    return G[used][:, used].tocsc(), used


def observation_norms(mesh: Mesh, params: PhysicsParams, points):
    """Dual norms of the P1 point-evaluation functionals.

    For a functional ``O v = b . v`` on the P1 space with Gram matrix ``G``
    the dual norm is ``sqrt(b^T G^{-1} b)``. The value grows like
    ``sqrt(log(1/h))`` under refinement because point evaluation is not
    bounded on ``H^1`` in two dimensions.
    """
    G, used = _gram_matrix(mesh, params)
    pos = -np.ones(mesh.n_vertices, dtype=int)
    pos[used] = np.arange(used.size)
    tri, bary = locate_points(mesh, np.atleast_2d(points))
    idx = pos[mesh.triangles[tri]]
    if np.any(idx < 0):
        raise ValueError("observation points must lie inside B_R")
    B = np.zeros((used.size, len(tri)))
    np.put_along_axis(B, idx.T, bary.T, axis=0)
    X = splu(G).solve(B)
    return np.sqrt(np.einsum("ik,ik->k", B, X))


# ---------------------------------------------------------------------------
# verification


def shape_norms(params: PhysicsParams, geom: GeometrySummary, field: RadiusField | None):
    """Plane-wave norms for one realization (``None`` is the nominal circle)."""
    if field is None:
        area = np.pi * geom.r0**2
    else:
        # exact for trigonometric radii once the grid resolves twice the top frequency
        phi = np.linspace(0.0, 2 * np.pi, 4096, endpoint=False)
        area = 0.5 * np.mean(field.radius(phi) ** 2) * 2 * np.pi
    return plane_wave_norms(params, geom.R, area, geom.r_plus)


def verify_forward_bound(field: RadiusField | None, params: PhysicsParams, geom: GeometrySummary,
                         solver, slack=0.05, seed=None):
    """Compare the FEM scattered-field norm with the explicit bound.

    Returns
    -------
    BoundReport
        ``lhs`` is the weighted norm of the scattered field over ``D_in`` and
        ``D_R``; ``rhs`` the bound with incident norms for this realization.
    """
    if not params.contrast_ordered:
        raise ValueError("bound requires n_in/n_out <= alpha_in/alpha_out")
    if solver.params != params:
        raise ValueError("solver was built for different physical parameters")
    sol = solver.solve(field)
    lhs = weighted_norm(sol)
    norms = shape_norms(params, geom, field)
    ck, c1, c2 = corollary_constants(params, geom)
    rhs = corollary_rhs(params, geom, norms)
    consts = {"C_kappa0": ck, "C1": c1, "C2": c2, "norm_ui_l2": norms.l2_out,
              "norm_ui_grad": norms.grad_out, "norm_ui_h1": norms.h1}
    return BoundReport(params.kappa0, consts, lhs, rhs, slack, seed)


def constant_report(params: PhysicsParams, geom: GeometrySummary, lambda_min, gamma, obs_norm,
                    n_max=None, mu_n=None):
    """Every constant available for the given parameters, as a flat dict.

    Constants whose hypotheses fail are reported as ``nan``.
    """
    ck, c1, c2 = corollary_constants(params, geom)
    norms = hold_all_norms(params, geom)
    c_gamma, proxy = stability_constant(params, geom, lambda_min, gamma, obs_norm, norms)
    out = {"C_kappa0": ck, "C1": c1, "C2": c2, "C_gamma_G": c_gamma, "C_gamma_G_proxy": proxy,
           "obs_norm": obs_norm, "lambda_min": lambda_min, "gamma": gamma,
           "gamma_tilde": geom.gamma_tilde, "gamma_hat": geom.gamma_hat, "C_surf": geom.c_surf,
           "thm41_factor_in": _bracket_in(params, geom.R, geom.diam_max) / params.kappa0**2,
           "thm41_factor_out": geom.R**2 * _bracket_out(params, geom.R)}
    try:
        out["C_gamma_G_suboptimal"] = suboptimal_stability_constant(params, geom, lambda_min, gamma,
                                                                    obs_norm, norms)
    except ValueError:
        out["C_gamma_G_suboptimal"] = float("nan")
    n_max = params.n_out if n_max is None else n_max
    mu_n = 2.0 * n_max if mu_n is None else mu_n
    try:
        s1, s2, s3 = soundsoft_constants(params, geom, n_max, mu_n)
    except ValueError:
        s1 = s2 = s3 = float("nan")
    out.update(soundsoft_C1=s1, soundsoft_C2=s2, soundsoft_C3=s3)
    return out
