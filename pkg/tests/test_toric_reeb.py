import numpy as np
import pytest

from reebchord.capacities import cube_capacity, gromov_width
from reebchord.moment_region import (
    RegionError,
    build_ball,
    build_concave_sqrt,
    build_convex_power,
    build_ellipsoid,
)
from reebchord.toric_reeb import (
    TorusFiber,
    chord_polyline,
    closed_orbit_period,
    enumerate_rational_fibers,
    legendrian_fiber,
    make_fiber,
    min_chord_period,
    primitive_vectors,
    rational_direction,
    reeb_angular_velocity,
    sup_chord_over_fibers,
)

TWO_PI = 2 * np.pi


def _fiber(w, nu, m=None):
    w, nu = np.asarray(w, float), np.asarray(nu, float)
    nt = np.where(w > 1e-8, nu, 0.0)
    return TorusFiber(w, nu, nt, m)


# -- oracles -----------------------------------------------------------------

@pytest.mark.parametrize("w, nu, expected", [
    ((0.5, 0.5), (1.0, 1.0), (TWO_PI, TWO_PI)),
    ((2 / 3, 2 / 3), (1.0, 0.5), (TWO_PI, np.pi)),
    ((1.0, 0.0), (1.0, 0.5), (TWO_PI, 0.0)),
])
def test_reeb_angular_velocity_oracles(w, nu, expected):
    np.testing.assert_allclose(reeb_angular_velocity(_fiber(w, nu)), expected, rtol=1e-14)


def test_closed_orbit_period_oracles():
    assert closed_orbit_period(_fiber((0.5, 0.5), (1, 1), (1, 1))) == pytest.approx(1.0)
    e = build_ellipsoid(1.0, 2.0)
    for t in (0.1, 0.4, 0.9):
        w = np.array([t, 2 * (1 - t)])
        assert closed_orbit_period(make_fiber(e, w)) == pytest.approx(2.0, rel=1e-12)
    assert closed_orbit_period(_fiber((0.5, 0.5), (1.0, np.sqrt(2.0)))) is None


def test_rational_direction():
    assert rational_direction([1.0, 0.5]) == (2, 1)
    assert rational_direction([3.0, 0.0]) == (1, 0)
    assert rational_direction([1.0, np.sqrt(2.0)]) is None
    assert rational_direction([1.0, -1.0]) is None


def test_enumeration_ball_height3():
    enum = enumerate_rational_fibers(build_ball(2, 1.0), 3)
    assert {f.m for f in enum.fibers} == {(1, 0), (0, 1), (1, 1)}
    assert all(f.period == pytest.approx(1.0, abs=1e-12) for f in enum.fibers)
    assert enum.minimum().period == pytest.approx(1.0, abs=1e-12)


def test_enumeration_ellipsoid_height3():
    enum = enumerate_rational_fibers(build_ellipsoid(1.0, 2.0), 3)
    periods = {f.m: f.period for f in enum.fibers}
    assert periods[(1, 0)] == pytest.approx(1.0, abs=1e-12)
    assert periods[(0, 1)] == pytest.approx(2.0, abs=1e-12)
    assert periods[(2, 1)] == pytest.approx(2.0, abs=1e-12)
    assert enum.minimum().m == (1, 0)


def test_enumeration_concave_height2():
    enum = enumerate_rational_fibers(build_concave_sqrt(1.0), 2)
    diag = [f for f in enum.fibers if f.m == (1, 1)]
    assert len(diag) == 1
    np.testing.assert_allclose(diag[0].fiber.w, (0.25, 0.25), atol=1e-10)
    assert diag[0].period == pytest.approx(0.5, abs=1e-10)


@pytest.mark.parametrize("region, m, w, s", [
    (build_ellipsoid(1.0, 2.0), (1, 1), (2 / 3, 2 / 3), 2 / 3),
    (build_ball(2, 1.0), (1, 1), (0.5, 0.5), 0.5),
    (build_ellipsoid(1.0, 2.0), (1, 2), (0.5, 1.0), 0.5),
])
def test_legendrian_fiber_oracles(region, m, w, s):
    torus = legendrian_fiber(region, m)
    np.testing.assert_allclose(torus.fiber.w, w, atol=1e-12)
    assert torus.scale == pytest.approx(s, abs=1e-12)


def test_legendrian_fiber_rejects_bad_m():
    e = build_ellipsoid(1.0, 2.0)
    for m in [(1, 0), (2, 2), (1, 1, 1)]:
        with pytest.raises(RegionError):
            legendrian_fiber(e, m)


def test_ball_diagonal_chord_is_genuine():
    rec = min_chord_period(legendrian_fiber(build_ball(2, 1.0), (1, 1)))
    assert rec.period == pytest.approx(0.5, abs=1e-12)
    assert rec.genuine
    np.testing.assert_allclose(rec.end_angles, (np.pi, np.pi), atol=1e-12)


def test_ellipsoid_diagonal_chord():
    assert min_chord_period(legendrian_fiber(build_ellipsoid(1.0, 2.0), (1, 1))).period == pytest.approx(2 / 3, abs=1e-12)


def test_counterexample_diagonal_chord(counterexample):
    rec = min_chord_period(legendrian_fiber(counterexample, (1, 1)))
    assert rec.period == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("region, expected", [
    (build_ellipsoid(1.0, 2.0), 2 / 3),
    (build_ball(2, 1.0), 0.5),
    (build_convex_power(1.0, 4), 2 ** -0.25),
])
def test_sup_chord_oracles(region, expected):
    sup = sup_chord_over_fibers(region, 20)
    assert sup.value == pytest.approx(expected, abs=1e-9)
    assert sup.witness == (1, 1)


# -- properties ----------------------------------------------------------------

def test_angular_velocity_invariant_under_normal_rescaling(suite):
    for region in suite.values():
        for f in enumerate_rational_fibers(region, 8).fibers:
            base = reeb_angular_velocity(f.fiber)
            for s in (0.1, 10.0):
                scaled = TorusFiber(f.fiber.w, s * f.fiber.nu, s * f.fiber.nu_tilde, f.fiber.primitive_dir)
                np.testing.assert_allclose(reeb_angular_velocity(scaled), base, rtol=1e-13)


def test_orbit_periods_bounded_below_by_gromov_width(suite):
    for region in suite.values():
        cg = gromov_width(region)
        periods = [f.period for f in enumerate_rational_fibers(region, 20).fibers]
        # near-axis plateau fibres of very flat regions sit within round-off of c_Gr
        assert min(periods) >= cg - 1e-9


def test_min_chord_equals_scale_and_linear_flow(suite):
    for region in suite.values():
        for m in primitive_vectors(2, 6, positive=True):
            torus = legendrian_fiber(region, m)
            rec = min_chord_period(torus)
            assert rec.period == pytest.approx(torus.scale, abs=1e-12)
            assert rec.residual <= 1e-9
            # integrated linear flow lands on the torus again
            omega = reeb_angular_velocity(torus.fiber)
            end = torus.base_angles() + rec.period * omega
            phase = (np.dot(m, end) - torus.phase + np.pi) % TWO_PI - np.pi
            assert abs(phase) <= 1e-12


def test_chord_period_independent_of_phase():
    e = build_ellipsoid(1.0, 2.0)
    periods = [min_chord_period(legendrian_fiber(e, (1, 1), c)).period for c in (0.0, 0.7, 3.0, 6.0)]
    assert np.ptp(periods) <= 1e-15


def test_sup_chord_equals_cube_capacity(suite):
    for region in suite.values():
        sup = sup_chord_over_fibers(region, 20)
        assert sup.value == pytest.approx(cube_capacity(region), abs=1e-9)
        assert sup.witness == (1, 1)


def test_chord_polyline_ball_is_diagonal():
    torus = legendrian_fiber(build_ball(2, 1.0), (1, 1))
    poly = chord_polyline(torus, min_chord_period(torus))
    assert poly.shape[1] == 3
    np.testing.assert_allclose(poly[:, 0], poly[:, 1], atol=1e-12)


def test_enumeration_is_thread_independent():
    e = build_convex_power(1.0, 3)
    a = enumerate_rational_fibers(e, 20, threads=1)
    b = enumerate_rational_fibers(e, 20, threads=4)
    assert [f.m for f in a.fibers] == [f.m for f in b.fibers]
    assert [f.period for f in a.fibers] == [f.period for f in b.fibers]


def test_higher_dimensional_enumeration():
    enum = enumerate_rational_fibers(build_ellipsoid(1.0, 2.0, 3.0), 6)
    assert enum.minimum().period == pytest.approx(1.0, abs=1e-10)
    interior = [f for f in enum.fibers if f.m == (6, 3, 2)]
    assert interior and interior[0].period == pytest.approx(6.0, abs=1e-9)
