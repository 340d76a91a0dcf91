"""Closed-form geodesics against the RK4 oracle and orbit identities."""

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

import godelsim.geodesics as geo
from godelsim.geometry import ModelParams, pseudo_norm


def timelike_cases():
    # (a, b, c, Y, omega) spanning slow and fast orbits, both signs of c
    return [
        (1.5, 3.0, 0.5, 0.0, 1.0),
        (2.5, 1.2, -0.9, 1.5, 1.0),
        (1.2, 0.7, 0.0, -0.4, 0.5),
        (3.0, 5.0, 1.2, 0.2, 2.0),
    ]


def make_timelike(a, b, c, Y, omega):
    mp = ModelParams(omega=omega)
    return geo.params_from_constants(a, b, c, Y, "timelike", mp), mp


@settings(max_examples=60, deadline=None)
@given(
    a=st.floats(1.05, 3.0),
    b=st.floats(0.3, 5.0),
    c=st.floats(-1.5, 1.5),
    s=st.floats(0.0, 12.0),
)
def test_timelike_pseudo_norm_is_one(a, b, c, s):
    assume(a * a > 1.0 + c * c + 1e-3)
    mp = ModelParams(omega=1.0)
    gp = geo.params_from_constants(a, b, c, 0.0, "timelike", mp)
    state = geo.timelike_eval(gp, s, mp)
    assert pseudo_norm(state.point, state.velocity, mp) == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(
    ell=st.floats(-1.0, 1.0),
    rho=st.floats(0.2, 4.0),
    tau=st.floats(0.0, 20.0),
)
def test_lightlike_pseudo_norm_is_zero(ell, rho, tau):
    mp = ModelParams(omega=1.0)
    state = geo.lightlike_eval(geo.ImpactParameter(ell, rho, 0.3), 0.0, 0.0, tau, mp)
    assert pseudo_norm(state.point, state.velocity, mp) == pytest.approx(0.0, abs=1e-9)


def test_timelike_k_below_circular_bound():
    # (a^2 - 1 - c^2) / (2 a^2) stays strictly below 1/2
    for a, b, c, Y, omega in timelike_cases():
        gp, _ = make_timelike(a, b, c, Y, omega)
        assert 0.0 <= gp.k < 1.0 / math.sqrt(2.0)


@pytest.mark.parametrize("case", timelike_cases())
def test_closed_form_matches_rk4(case):
    gp, mp = make_timelike(*case)
    s_max = 20.0 / (abs(gp.a) * mp.omega)
    # RK4 truncation ~ 40 (a w)^5 s ds^4; pick ds so it sits below 1e-8
    ds = min(1e-3, (1e-8 / (40.0 * (abs(gp.a) * mp.omega) ** 5 * s_max)) ** 0.25)
    n = int(math.ceil(s_max / ds))
    oracle = geo.ode_integrate(geo.timelike_eval(gp, 0.0, mp), n * ds, ds, mp, stride=max(1, n // 200))
    points, velocities = geo.geodesic_path(gp, oracle.s, mp)
    assert np.max(np.abs(points - oracle.points)) < 1e-6
    assert np.max(np.abs(velocities - oracle.velocities)) < 1e-6


@pytest.mark.parametrize("case", timelike_cases()[:2])
def test_rk4_conserved_drift(case):
    gp, mp = make_timelike(*case)
    oracle = geo.ode_integrate(geo.timelike_eval(gp, 0.0, mp), 10.0, 1e-3, mp, stride=10)
    for key in ("a", "b", "c", "Y", "pseudo_norm"):
        assert oracle.max_drift[key] < 1e-8


def test_relation8_residual_vanishes():
    s = np.linspace(0.0, 15.0, 400)
    for case in timelike_cases():
        gp, mp = make_timelike(*case)
        assert np.max(np.abs(geo.relation8_residual(gp, s, mp))) < 1e-12


def test_conserved_quantities_recovered_from_state(mp):
    gp, mp = make_timelike(1.7, 2.2, 0.6, -0.8, 1.0)
    for s in (0.0, 1.3, 7.9):
        state = geo.timelike_eval(gp, s, mp)
        back = geo.conserved_from_state(state, mp)
        assert back.kind == "timelike"
        assert back.a == pytest.approx(gp.a, rel=1e-12)
        assert back.b == pytest.approx(gp.b, rel=1e-12)
        assert back.c == pytest.approx(gp.c, rel=1e-12, abs=1e-12)
        assert back.Y == pytest.approx(gp.Y, rel=1e-12, abs=1e-12)


def test_conserved_from_state_infers_lightlike(mp):
    state = geo.lightlike_eval(geo.ImpactParameter(0.4, 1.5, 0.0), 0.0, 0.0, 2.0, mp)
    assert geo.conserved_from_state(state, mp).kind == "lightlike"


def test_xy_projection_is_periodic(mp):
    gp, mp = make_timelike(1.5, 3.0, 0.5, 0.0, 1.0)
    period = geo.xy_period(gp, mp)
    s = np.array([0.7, 0.7 + period, 0.7 + 2 * period])
    points, velocities = geo.geodesic_path(gp, s, mp)
    # x, y and their rates return each period; t and z do not
    for col in (1, 2):
        assert np.max(np.abs(points[:, col] - points[0, col])) < 1e-10
        assert np.max(np.abs(velocities[:, col + 4 - 4] - velocities[0, col])) < 1e-10
    assert points[1, 0] != pytest.approx(points[0, 0], abs=1e-3)


def test_recurrence_gap_matches_sampled_orbit():
    for case in timelike_cases():
        gp, mp = make_timelike(*case)
        period = geo.xy_period(gp, mp)
        for n in (1, 3):
            p0, _ = geo.geodesic_path(gp, [0.4, 0.4 + n * period], mp)
            gap = abs(p0[1, 0] - p0[0, 0])
            assert gap == pytest.approx(geo.recurrence_time_gap(gp, mp, n), abs=1e-10)
        # sharp single-return bound (2 - sqrt 2) pi / omega; two or more
        # returns always accumulate at least pi / omega
        assert geo.recurrence_time_gap(gp, mp) >= (2.0 - math.sqrt(2.0)) * math.pi / mp.omega - 1e-12
        assert geo.recurrence_time_gap(gp, mp, 2) >= math.pi / mp.omega - 1e-12


def test_recurrence_gap_scales_with_n(mp):
    gp, mp = make_timelike(1.5, 3.0, 0.5, 0.0, 1.0)
    one = geo.recurrence_time_gap(gp, mp, 1)
    assert geo.recurrence_time_gap(gp, mp, 4) == pytest.approx(4 * one, rel=1e-14)


# ---------------------------------------------------------------------------
# lightlike rays
# ---------------------------------------------------------------------------


def test_impact_parameter_round_trip(mp):
    B = geo.ImpactParameter(ell=-0.3, rho=2.4, Y=0.9)
    gp = geo.lightlike_params(B, T0=1.0, Z0=-2.0, mp=mp)
    assert gp.a == 1.0
    back = geo.impact_parameter(gp)
    assert back.ell == pytest.approx(B.ell, rel=1e-14)
    assert back.rho == pytest.approx(B.rho, rel=1e-14)
    assert back.Y == pytest.approx(B.Y, rel=1e-14)
    # and the stated initial conditions hold
    state = geo.lightlike_eval(B, 1.0, -2.0, 0.0, mp)
    assert state.point[0] == pytest.approx(1.0, abs=1e-12)
    assert state.point[3] == pytest.approx(-2.0, abs=1e-12)


def test_impact_parameter_rejects_timelike():
    gp, _ = make_timelike(1.5, 3.0, 0.5, 0.0, 1.0)
    with pytest.raises(ValueError):
        geo.impact_parameter(gp)


def test_lightlike_params_validation(mp):
    with pytest.raises(ValueError, match="ell"):
        geo.lightlike_params(geo.ImpactParameter(1.5, 1.0, 0.0), 0.0, 0.0, mp)
    with pytest.raises(ValueError, match="rho"):
        geo.lightlike_params(geo.ImpactParameter(0.5, 0.0, 0.0), 0.0, 0.0, mp)


def test_ray_residuals_vanish_on_own_geodesic(mp):
    B = geo.ImpactParameter(ell=0.5, rho=1.8, Y=-0.6)
    gp = geo.lightlike_params(B, 0.0, 0.0, mp)
    tau = np.linspace(0.0, 40.0, 500)
    points, velocities = geo.geodesic_path(gp, tau, mp)
    res = geo.ray_convergence_residuals(points, velocities, B, mp)
    for key in ("ell", "rho", "Y", "cylinder"):
        assert np.max(np.abs(res[key])) < 1e-10, key


def test_ray_direction_slope_reference_values():
    assert geo.ray_direction_slope(0.0) == 0.0
    assert geo.ray_direction_slope(1.0) == pytest.approx(1.0, rel=1e-14)
    assert geo.ray_direction_slope(-1.0) == pytest.approx(-1.0, rel=1e-14)
    assert geo.ray_direction_slope(0.5) == pytest.approx(0.8603796100280631, rel=1e-14)


@pytest.mark.parametrize("ell", [-1.0, -0.5, 0.0, 0.5, 1.0])
def test_measured_slope_approaches_direction_slope(ell, mp):
    B = geo.ImpactParameter(ell=ell, rho=1.0, Y=0.0)
    got = geo.measured_ray_slope(B, 1e3, mp)
    assert got == pytest.approx(geo.ray_direction_slope(ell), abs=1e-3)


def test_measured_slope_tightens_with_horizon(mp):
    B = geo.ImpactParameter(ell=0.5, rho=2.0, Y=0.0)
    want = geo.ray_direction_slope(0.5)
    near = abs(geo.measured_ray_slope(B, 1e2, mp) - want)
    far = abs(geo.measured_ray_slope(B, 1e4, mp) - want)
    assert far < near


# ---------------------------------------------------------------------------
# oracle mechanics and tables
# ---------------------------------------------------------------------------


def test_ode_integrate_recording_grid(mp):
    gp, mp = make_timelike(1.5, 3.0, 0.5, 0.0, 1.0)
    path = geo.ode_integrate(geo.timelike_eval(gp, 0.0, mp), 1.0, 0.01, mp, stride=10)
    assert path.s[0] == 0.0
    assert np.allclose(np.diff(path.s), 0.1)
    assert path.points.shape == (len(path.s), 4)
    assert path.velocities.shape == (len(path.s), 4)


def test_ode_integrate_validation(mp):
    gp, mp = make_timelike(1.5, 3.0, 0.5, 0.0, 1.0)
    state = geo.timelike_eval(gp, 0.0, mp)
    with pytest.raises(ValueError):
        geo.ode_integrate(state, -1.0, 0.01, mp)
    with pytest.raises(ValueError):
        geo.ode_integrate(state, 1.0, 0.01, mp, stride=0)


def test_path_table_columns(mp):
    gp, mp = make_timelike(1.5, 3.0, 0.5, 0.0, 1.0)
    s = np.linspace(0.0, 2.0, 7)
    points, velocities = geo.geodesic_path(gp, s, mp)
    table = geo.path_table(s, points, velocities, mp)
    assert tuple(table) == geo.PATH_COLUMNS
    assert np.allclose(table["a"], gp.a)
    assert np.allclose(table["b"], gp.b)
    assert np.allclose(table["c"], gp.c)
    assert np.allclose(table["Y"], gp.Y)
    assert np.allclose(table["pseudo_norm"], 1.0)


def test_params_from_constants_rejects_non_timelike(mp):
    with pytest.raises(ValueError):
        geo.params_from_constants(1.0, 1.0, 0.9, 0.0, "timelike", mp)
