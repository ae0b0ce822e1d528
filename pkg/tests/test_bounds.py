import numpy as np
import pytest

from shapeinv.bounds import (
    GeometrySummary,
    constant_report,
    corollary_constants,
    hold_all_norms,
    incident_norms_quadrature,
    observation_norms,
    plane_wave_norms,
    soundsoft_constants,
    stability_constant,
    suboptimal_stability_constant,
    theorem41_rhs,
    theorem42_rhs,
    verify_forward_bound,
)
from shapeinv.forward import PhysicsParams
from shapeinv.observe import MeasurementSetup, measurement_points
from shapeinv.shape import RadiusField

# frozen from tests/oracles/derive_bound_constants.py (mpmath, 40 digits)
KAPPA0 = 0.20943951023931954923
COROLLARY = (4.9166419273217283375, 1224.4897959183673469, 6122.4489795918367347)
THM41_UNIT = 51.014487665384496501
THM41_MIXED = 153.49924979351178816
THM42_CONTRAST = 138756.73494488877371
STAB = (4033271.374530986003, 414.66076571675236845)
SUBOPT = 1466223.6773772185738
SOUNDSOFT_KR1 = (11.532562594670795889, 0.15344371668444674351, 17.332684418683509318)
SOUNDSOFT_K100 = (81.425630690424089176, 0.15648250112243934326, 120.80887552751189634)
REL = 1e-12


@pytest.fixture(scope="module")
def geom():
    return GeometrySummary(r0=0.01, gamma_beta=0.5, R=0.07)


def test_geometry_summary(geom):
    assert geom.R_scatt == pytest.approx(0.035)
    assert geom.diam_max == pytest.approx(0.03)
    assert geom.gamma_tilde == pytest.approx(1 / 18)
    assert geom.gamma_hat == pytest.approx(1 / 18)
    with pytest.raises(ValueError):
        GeometrySummary(r0=0.01, gamma_beta=0.5, R=0.07, R_scatt=0.012)
    with pytest.raises(ValueError):
        GeometrySummary(r0=0.01, gamma_beta=0.5, R=0.07, R_scatt=0.08)


def test_corollary_fixture(geom):
    p = PhysicsParams()
    assert p.kappa0 == pytest.approx(KAPPA0, rel=1e-15)
    assert corollary_constants(p, geom) == pytest.approx(COROLLARY, rel=REL)


def test_corollary_limits(geom):
    big = PhysicsParams(kappa=1e9)
    assert corollary_constants(big, geom)[0] == pytest.approx(0.07 * np.sqrt(8), rel=1e-8)
    assert corollary_constants(PhysicsParams(), geom)[1] == pytest.approx(6 / 0.07**2, rel=1e-14)


def test_c_kappa_decreasing(geom):
    ks = np.geomspace(0.05, 500, 50)
    c = [corollary_constants(PhysicsParams(kappa=k), geom)[0] for k in ks]
    assert np.all(np.diff(c) < 0)


def test_theorem41_fixtures(geom):
    p = PhysicsParams()
    assert theorem41_rhs(p, geom, 1.0, 1.0) == pytest.approx(THM41_UNIT, rel=REL)
    assert theorem41_rhs(p, geom, 0.3, 2.5) == pytest.approx(THM41_MIXED, rel=REL)
    assert theorem41_rhs(p, geom, 0.0, 0.0) == 0.0


def test_theorem42_fixture_and_reduction(geom):
    p = PhysicsParams(alpha_in=2.0)
    got = theorem42_rhs(p, geom, 1 / 18, 1.0, 1.0, 1.0)
    assert got == pytest.approx(THM42_CONTRAST, rel=REL)
    assert theorem42_rhs(p, geom, 1 / 18, f_in_norm=0.7, f_out_norm=0.2) == pytest.approx(
        theorem41_rhs(p, geom, 0.7, 0.2), rel=1e-14)


def test_theorem42_hypotheses(geom):
    with pytest.raises(ValueError):
        theorem42_rhs(PhysicsParams(), geom, 0.05, 1.0)
    with pytest.raises(ValueError):
        theorem42_rhs(PhysicsParams(alpha_in=2.0), geom, 0.6, 1.0)


def test_theorem42_blows_up_at_equal_alpha(geom):
    vals = [theorem42_rhs(PhysicsParams(alpha_in=1 + e), geom, 0.05, 1.0) for e in (1e-1, 1e-3, 1e-5)]
    assert vals[0] < vals[1] < vals[2]
    assert vals[2] > 1e3 * vals[0]


def test_stability_fixture(geom):
    p = PhysicsParams()
    c, proxy = stability_constant(p, geom, 0.01, 4.0, 10.0)
    assert c == pytest.approx(STAB[0], rel=REL)
    assert proxy == pytest.approx(STAB[1], rel=REL)


def test_stability_scaling(geom):
    p = PhysicsParams()
    c1, _ = stability_constant(p, geom, 0.01, 4.0, 10.0)
    c2, _ = stability_constant(p, geom, 0.02, 4.0, 10.0)
    assert c2 == pytest.approx(c1 / 2, rel=1e-14)
    _, a = stability_constant(p, geom, 0.01, 0.0, 10.0)
    _, b = stability_constant(p.with_kappa(2 * p.kappa0), geom, 0.01, 0.0, 10.0)
    assert b == pytest.approx(2 * a, rel=1e-14)
    with pytest.raises(ValueError):
        stability_constant(p, geom, 0.0, 4.0, 10.0)


def test_suboptimal_fixture(geom):
    p = PhysicsParams(alpha_in=2.0)
    assert suboptimal_stability_constant(p, geom, 0.01, 4.0, 10.0) == pytest.approx(SUBOPT, rel=REL)
    with pytest.raises(ValueError):
        suboptimal_stability_constant(PhysicsParams(), geom, 0.01, 4.0, 10.0)


def test_suboptimal_zero_contrast_drops_volume_term(geom):
    # alpha_in n_in / alpha_out = n_out: only the interface term remains
    p = PhysicsParams(alpha_in=2.0, n_in=0.5)
    norms = hold_all_norms(p, geom)
    full = suboptimal_stability_constant(p, geom, 1.0, 0.0, 1.0, norms)
    no_l2 = suboptimal_stability_constant(
        p, geom, 1.0, 0.0, 1.0, type(norms)(norms.l2_out, norms.grad_out, norms.h1, 0.0, norms.c1_tube))
    assert full == pytest.approx(no_l2, rel=1e-14)


def test_suboptimal_kappa_scan_has_interior_minimum(geom):
    p = PhysicsParams(alpha_in=2.0)
    ks = np.geomspace(0.1, 10, 60)
    c = np.array([suboptimal_stability_constant(p.with_kappa(k), geom, 0.01, 4.0, 10.0) for k in ks])
    i = int(np.argmin(c))
    assert 0 < i < ks.size - 1
    assert np.all(np.diff(c[: i + 1]) < 0) and np.all(np.diff(c[i:]) > 0)


def test_soundsoft_fixtures(geom):
    got = soundsoft_constants(PhysicsParams(kappa=1 / 0.07), geom, 1.0, 2.0)
    assert got == pytest.approx(SOUNDSOFT_KR1, rel=REL)
    got = soundsoft_constants(PhysicsParams(kappa=100.0), geom, 1.5, 2.5)
    assert got == pytest.approx(SOUNDSOFT_K100, rel=REL)


def test_soundsoft_threshold(geom):
    with pytest.raises(ValueError, match="threshold"):
        soundsoft_constants(PhysicsParams(), geom, 1.0, 2.0)
    with pytest.raises(ValueError):
        soundsoft_constants(PhysicsParams(kappa=100.0), geom, 1.0, 0.0)


def test_constant_report_marks_failed_hypotheses(geom):
    rep = constant_report(PhysicsParams(), geom, 0.01, 20.0, 385.0)
    assert np.isnan(rep["C_gamma_G_suboptimal"])
    assert rep["C_kappa0"] == pytest.approx(COROLLARY[0], rel=REL)
    assert all(v > 0 for k, v in rep.items() if isinstance(v, float) and np.isfinite(v))


def test_quadrature_matches_closed_form_norms(geom):
    p = PhysicsParams(kappa=30.0, direction=(0.6, 0.8))
    quad = incident_norms_quadrature(p, geom.R, lambda phi: np.full_like(phi, 0.01))
    closed = plane_wave_norms(p, geom.R, np.pi * 0.01**2, 0.01)
    assert quad.l2_out == pytest.approx(closed.l2_out, rel=1e-10)
    assert quad.grad_out == pytest.approx(closed.grad_out, rel=1e-10)
    assert quad.h1 == pytest.approx(closed.h1, rel=1e-10)
    assert quad.l2_in == pytest.approx(closed.l2_in, rel=1e-10)


def test_observation_norms(default_mesh, default_params):
    pts = measurement_points(MeasurementSetup(K=8))
    norms = observation_norms(default_mesh, default_params, pts)
    assert np.all(norms > 0)
    # rotationally equivalent points have nearly equal norms on the quasi-uniform mesh
    assert norms.max() / norms.min() < 1.2
    with pytest.raises(ValueError):
        observation_norms(default_mesh, default_params, [[0.09, 0.0]])


def test_forward_bound_holds(default_solver, default_params, geom, coeffs6):
    rep = verify_forward_bound(None, default_params, geom, default_solver)
    assert rep.passed and rep.lhs > 0
    field = RadiusField(np.linspace(-1, 1, 6), coeffs6)
    rep = verify_forward_bound(field, default_params, geom, default_solver, seed=3)
    assert rep.passed and rep.lhs <= rep.rhs
    assert rep.as_row()["seed"] == 3
