import numpy as np
import pytest

from reebchord.integrate import FlowError, integrate_batch
from reebchord.moment_region import boundary_point, build_ball, build_concave_sqrt, build_ellipsoid
from reebchord.moment_region import positive_orthant_directions
from reebchord.starshaped_flow import (
    StarShapedDomain,
    angles,
    c1_distance,
    complex_J,
    fiber_point,
    find_chords,
    integrate_flow,
    lambda_eval,
    perturb,
    reeb_field,
    sphere_samples,
    toric_domain,
    transported_legendrian,
)
from reebchord.toric_reeb import legendrian_fiber, make_fiber, reeb_angular_velocity

TWO_PI = 2 * np.pi


@pytest.fixture(scope="module")
def ellipsoid():
    region = build_ellipsoid(1.0, 2.0)
    return region, toric_domain(region)


def round_ball(R=1.0):
    r = np.sqrt(R / np.pi)
    return StarShapedDomain(4, lambda u: np.full(np.shape(u)[:-1], r), lambda u: np.zeros(np.shape(u)),
                            f"round ball R={R:g}")


# -- lambda and the Reeb field --------------------------------------------------

def test_lambda_oracles():
    assert lambda_eval([1, 0, 0, 0], [0, 1, 0, 0]) == pytest.approx(0.5)
    z = np.array([0.3, -1.2, 0.7, 2.0])
    assert lambda_eval(z, z) == 0.0
    assert lambda_eval([0, 1, 1, 0], [-TWO_PI, 0, 0, TWO_PI]) == pytest.approx(TWO_PI)


def test_hopf_flow_on_round_ball():
    D = round_ball()
    z = np.array([1 / np.sqrt(np.pi), 0, 0, 0])
    np.testing.assert_allclose(reeb_field(D, z), TWO_PI * complex_J(z), atol=1e-14)
    assert lambda_eval(z, reeb_field(D, z)) == pytest.approx(1.0, abs=1e-14)


def test_toric_reeb_field_matches_angular_velocity(ellipsoid):
    region, D = ellipsoid
    w = np.array([2 / 3, 2 / 3])
    z = fiber_point(w, np.array([0.4, 1.1]))
    R = reeb_field(D, z)
    # angular velocity from the ambient vector: (x dy - y dx) / r^2 per block
    r2 = z[0::2] ** 2 + z[1::2] ** 2
    omega = (z[0::2] * R[1::2] - z[1::2] * R[0::2]) / r2
    np.testing.assert_allclose(omega, reeb_angular_velocity(make_fiber(region, w)), atol=1e-8)
    np.testing.assert_allclose(omega, (TWO_PI, np.pi), atol=1e-8)


@pytest.mark.parametrize("region", [build_ball(2, 1.0), build_ellipsoid(1.0, 2.0), build_concave_sqrt(1.0)],
                         ids=lambda r: r.label)
def test_lambda_of_reeb_is_one(region, rng):
    D = toric_domain(region)
    z = D.project(rng.standard_normal((200, 4)))
    np.testing.assert_allclose(lambda_eval(z, reeb_field(D, z)), 1.0, atol=1e-8)


def test_reeb_field_rejects_points_off_surface(ellipsoid):
    with pytest.raises(FlowError):
        reeb_field(ellipsoid[1], np.array([2.0, 0, 0, 0]))


@pytest.mark.parametrize("region", [build_ball(2, 1.0), build_ellipsoid(1.0, 2.0), build_concave_sqrt(1.0)],
                         ids=lambda r: r.label)
def test_toric_models_agree(region):
    D = toric_domain(region)
    w = boundary_point(region, positive_orthant_directions(2, 300))
    z = fiber_point(w, np.zeros(2))
    assert np.max(np.abs(D.hamiltonian(z) - 1.0)) <= 1e-8


def test_grad_H_matches_finite_differences(ellipsoid, rng):
    D = ellipsoid[1]
    z = D.project(rng.standard_normal((100, 4)))
    h = 1e-6
    fd = np.stack([(D.hamiltonian(z + h * e) - D.hamiltonian(z - h * e)) / (2 * h) for e in np.eye(4)], axis=1)
    g = D.hamiltonian_gradient(z)
    assert np.max(np.linalg.norm(g - fd, axis=1) / np.linalg.norm(g, axis=1)) <= 1e-5


def test_finite_difference_fallback_matches_analytic(ellipsoid, rng):
    D = ellipsoid[1]
    fallback = StarShapedDomain(4, D.radial, None, "fd")
    u = sphere_samples(4, 50, seed=2)
    np.testing.assert_allclose(fallback.grad_rho(u), D.grad_rho(u), atol=1e-8)


# -- flows ---------------------------------------------------------------------

def test_ball_orbits_have_period_one(rng):
    D = toric_domain(build_ball(2, 1.0))
    for z0 in D.project(rng.standard_normal((3, 4))):
        tr = integrate_flow(D, z0, 1.0)
        assert np.linalg.norm(tr.z[-1] - z0) <= 1e-8


def test_ellipsoid_axis_orbit_closes(ellipsoid):
    D = ellipsoid[1]
    z0 = fiber_point(np.array([1.0, 0.0]), np.zeros(2))
    tr = integrate_flow(D, z0, 1.0)
    assert np.linalg.norm(tr.z[-1] - z0) <= 1e-7


def test_ellipsoid_interior_orbit_closes_at_two(ellipsoid):
    D = ellipsoid[1]
    z0 = fiber_point(np.array([2 / 3, 2 / 3]), np.array([0.3, 0.0]))
    tr = integrate_flow(D, z0, 2.0)
    assert np.linalg.norm(tr.z[-1] - z0) <= 1e-7
    assert tr.max_surface_drift() <= 1e-7
    assert tr.max_lambda_defect() <= 1e-7
    assert tr.action() == pytest.approx(2.0, abs=1e-6)


def test_fiber_trajectory_matches_linear_flow(ellipsoid):
    region, D = ellipsoid
    w = np.array([2 / 3, 2 / 3])
    omega = reeb_angular_velocity(make_fiber(region, w))
    tr = integrate_flow(D, fiber_point(w, np.zeros(2)), 2.0)
    expected = (tr.t[:, None] * omega + np.pi) % TWO_PI - np.pi
    diff = (angles(tr.z) - expected + np.pi) % TWO_PI - np.pi
    assert np.max(np.abs(diff)) <= 1e-6


def test_integrate_flow_rejects_bad_input(ellipsoid):
    D = ellipsoid[1]
    with pytest.raises(FlowError):
        integrate_flow(D, np.array([3.0, 0, 0, 0]), 1.0)
    with pytest.raises(ValueError):
        integrate_flow(D, fiber_point(np.array([1.0, 0.0]), np.zeros(2)), 0.0)


def test_unprojected_flow_reports_raw_drift(ellipsoid):
    D = ellipsoid[1]
    z0 = fiber_point(np.array([2 / 3, 2 / 3]), np.zeros(2))
    tr = integrate_flow(D, z0, 1.0, project=False)
    assert not tr.projected
    assert tr.max_raw_drift == pytest.approx(tr.max_surface_drift(), rel=1e-6, abs=1e-15)


def test_batch_integrator_on_harmonic_oscillator():
    res = integrate_batch(lambda z: complex_J(z), np.array([[1.0, 0.0], [0.0, 2.0]]), [TWO_PI, np.pi])
    np.testing.assert_allclose(res.final, [[1.0, 0.0], [0.0, -2.0]], atol=1e-9)


def test_batch_integrator_drift_limit():
    with pytest.raises(FlowError):
        integrate_batch(lambda z: np.ones_like(z), np.zeros((1, 2)), 1.0,
                        invariant=lambda z: z[:, 0], max_drift=0.5)


# -- perturbations and distance --------------------------------------------------

def test_c1_distance_of_identical_domains(ellipsoid):
    assert c1_distance(ellipsoid[1], ellipsoid[1]) == 0.0


def test_c1_distance_of_dilation(ellipsoid):
    D = ellipsoid[1]
    eta = 0.03
    u = sphere_samples(4, 2000, seed=0)
    expected = eta * np.max(D.rho(u) + np.linalg.norm(D.grad_rho(u), axis=1))
    assert c1_distance(D, D.dilate(1 + eta)) == pytest.approx(expected, rel=1e-12)


def test_perturb_zero_amplitude_is_identity(ellipsoid):
    D = ellipsoid[1]
    assert c1_distance(D, perturb(D, 1, 0.0)) == 0.0


def test_perturb_is_deterministic(ellipsoid):
    D = ellipsoid[1]
    a, b = perturb(D, 42, 0.01, 0.5, 3), perturb(D, 42, 0.01, 0.5, 3)
    assert c1_distance(D, a) == c1_distance(D, b)
    assert a.params["centers"] == b.params["centers"]


def test_perturbation_distance_is_linear_in_amplitude(ellipsoid):
    D = ellipsoid[1]
    d1 = c1_distance(D, perturb(D, 7, 0.01))
    d2 = c1_distance(D, perturb(D, 7, 0.02))
    assert d2 / d1 == pytest.approx(2.0, rel=0.1)


def test_perturbation_gradient_matches_finite_differences(ellipsoid):
    P = perturb(ellipsoid[1], 7, 0.05, 0.8, 4)
    fd = StarShapedDomain(4, P.radial, None, "fd")
    u = sphere_samples(4, 300, seed=5)
    np.testing.assert_allclose(P.grad_rho(u), fd.grad_rho(u), atol=1e-7)


def test_perturb_rejects_bad_parameters(ellipsoid):
    D = ellipsoid[1]
    for kwargs in ({"amplitude": -0.1}, {"amplitude": 0.1, "width": 0.0}, {"amplitude": 0.1, "count": 0}):
        with pytest.raises(ValueError):
            perturb(D, 0, **kwargs)


# -- Legendrian knots and chords --------------------------------------------------

def test_exact_torus_is_legendrian(ellipsoid):
    region, D = ellipsoid
    assert transported_legendrian(D, legendrian_fiber(region, (1, 1))).legendrian_defect <= 1e-10


@pytest.mark.parametrize("eta", [0.01, 0.02, 0.05])
def test_transported_torus_defect_is_small(ellipsoid, eta):
    region, D = ellipsoid
    tt = transported_legendrian(perturb(D, 7, eta), legendrian_fiber(region, (1, 1)))
    # radial projection keeps the knot Legendrian, so only round-off remains
    assert tt.legendrian_defect <= min(0.1 * eta, 1e-10)


def test_transported_torus_lies_on_surface(ellipsoid):
    region, D = ellipsoid
    P = perturb(D, 7, 0.05)
    tt = transported_legendrian(P, legendrian_fiber(region, (1, 1)))
    s = np.linspace(0, TWO_PI, 50)
    np.testing.assert_allclose(P.hamiltonian(tt.point(s)), 1.0, atol=1e-12)
    np.testing.assert_allclose(tt.defect_coordinates(tt.point(s)), 0.0, atol=1e-12)


@pytest.mark.parametrize("region, expected", [(build_ball(2, 1.0), 0.5), (build_ellipsoid(1.0, 2.0), 2 / 3)],
                         ids=["ball", "ellipsoid"])
def test_find_chords_recovers_closed_form(region, expected):
    D = toric_domain(region)
    tt = transported_legendrian(D, legendrian_fiber(region, (1, 1)))
    search = find_chords(D, tt, 2.0)
    best = search.minimal()
    assert best is not None
    assert best.period == pytest.approx(expected, abs=1e-6)
    assert best.genuine
    assert best.endpoint_distance <= 1e-6
    assert best.surface_drift <= 1e-7
    assert [c.period for c in search.chords] == sorted(c.period for c in search.chords)


def test_find_chords_on_perturbed_ellipsoid(ellipsoid):
    region, D = ellipsoid
    tt = transported_legendrian(perturb(D, 7, 0.01), legendrian_fiber(region, (1, 1)))
    best = find_chords(tt.domain, tt, 2.0).minimal()
    assert abs(best.period - 2 / 3) <= 0.1


def test_find_chords_reports_empty_search(ellipsoid):
    region, D = ellipsoid
    tt = transported_legendrian(D, legendrian_fiber(region, (1, 1)))
    search = find_chords(D, tt, 0.3)
    assert search.chords == []
    assert search.message == "no chord found up to T_max = 0.3"


def test_find_chords_thread_independent(ellipsoid):
    region, D = ellipsoid
    tt = transported_legendrian(D, legendrian_fiber(region, (1, 1)))
    a = find_chords(D, tt, 1.0, threads=1)
    b = find_chords(D, tt, 1.0, threads=3)
    assert [c.period for c in a.chords] == [c.period for c in b.chords]
