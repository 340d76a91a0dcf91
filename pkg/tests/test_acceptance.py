"""End-to-end acceptance checks for the advertised guarantees.

Each test covers one numbered guarantee and prints a single [PASS]/[FAIL]
line; the lines are echoed again in a terminal summary section so the
whole gate can be read at a glance.  Tolerances are asserted exactly as
published, with shared Monte Carlo ensembles reused across the
statistical criteria to keep the gate fast and the comparisons honest
(a truncated long run is bit-identical to a short run with the same
seed, so criteria at different horizons really do see the same paths).
"""

import math
import time

import numpy as np
import pytest

import godelsim.asymptotics as asym
import godelsim.diffusion as dif
import godelsim.geodesics as geo
import godelsim.geometry as geom
import godelsim.harness as h
from godelsim.geometry import ModelParams

from conftest import ACCEPTANCE_LINES, random_points

OMEGAS = (0.5, 1.0, 2.0)
ELLS = (-1.0, -0.5, 0.0, 0.5, 1.0)


def conclude(num: int, label: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {num:2d} {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert passed, line


# ---------------------------------------------------------------------------
# shared ensembles
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def ensemble(tmp_path_factory):
    """200 paths, sigma=1, omega=1, horizon 20, plus the horizon-10 prefixes."""
    out = tmp_path_factory.mktemp("acceptance-ensemble")
    cfg = h.RunConfig.from_mapping(
        {"scenario": "ensemble", "s_max": 20.0, "n_paths": 200,
         "out_dir": str(out)}
    )
    mp, _, recs20, aborted = h.simulate_ensemble(cfg)
    recs10 = [asym.truncate_path(rec, 10.0) for rec in recs20]
    return {
        "mp": mp,
        "recs20": recs20,
        "recs10": recs10,
        "aborted": aborted,
        "est20": [asym.estimate_boundary(rec) for rec in recs20],
        "est10": [asym.estimate_boundary(rec) for rec in recs10],
    }


# ---------------------------------------------------------------------------
# 1: curvature identities at random points
# ---------------------------------------------------------------------------


def fd_christoffel(point, mp, h_step=1e-5):
    # connection from centered differences of the metric alone,
    # independent of the closed-form coefficients under test
    dg = np.zeros((4, 4, 4))
    for m in range(4):
        dp = np.zeros(4)
        dp[m] = h_step
        dg[m] = (geom.metric_at(point + dp, mp)
                 - geom.metric_at(point - dp, mp)) / (2.0 * h_step)
    sym = dg.transpose(0, 2, 1) + dg.transpose(2, 0, 1) - dg.transpose(1, 2, 0)
    return 0.5 * np.einsum("kl,ijl->kij", geom.inverse_metric_at(point, mp), sym)


def test_criterion_01_geometry_identities(rng):
    t0 = time.perf_counter()
    eye = np.eye(4)
    worst = {"inverse": 0.0, "connection": 0.0, "ricci": 0.0,
             "scalar": 0.0, "einstein": 0.0}
    for omega in OMEGAS:
        mp = ModelParams(omega=omega, sigma=1.0)
        for p in random_points(rng, 1000):
            worst["scalar"] = max(
                worst["scalar"],
                abs(geom.scalar_curvature(p, mp) - 2.0 * omega ** 2)
                / (2.0 * omega ** 2))
            g = geom.metric_at(p, mp)
            gi = geom.inverse_metric_at(p, mp)
            scale = 1.0 + np.abs(g) @ np.abs(gi)
            worst["inverse"] = max(
                worst["inverse"], np.max(np.abs(g @ gi - eye) / scale))
            gam = geom.christoffel_at(p, mp)
            gam_fd = fd_christoffel(p, mp)
            worst["connection"] = max(
                worst["connection"],
                np.max(np.abs(gam - gam_fd) / (1.0 + np.abs(gam_fd))))
            uu = np.outer(geom.dust_velocity(p, mp), geom.dust_velocity(p, mp))
            worst["ricci"] = max(
                worst["ricci"],
                np.max(np.abs(geom.ricci_at(p, mp) - uu) / (1.0 + np.abs(uu))))
            ein_scale = 1.0 + np.abs(uu) + 2.0 * omega ** 2 * np.abs(g)
            worst["einstein"] = max(
                worst["einstein"],
                np.max(np.abs(geom.einstein_residual(p, mp)) / ein_scale))
    wall = time.perf_counter() - t0
    tols = {"inverse": 1e-12, "connection": 1e-6, "ricci": 1e-10,
            "scalar": 1e-10, "einstein": 1e-10}
    passed = wall < 5.0 and all(worst[k] < tols[k] for k in tols)
    detail = ", ".join(f"{k} {worst[k]:.1e}" for k in tols) + f", {wall:.2f}s"
    conclude(1, "curvature identities", passed, detail)


# ---------------------------------------------------------------------------
# 2: closed-form timelike geodesics against an RK4 oracle
# ---------------------------------------------------------------------------


def test_criterion_02_timelike_closed_form():
    t0 = time.perf_counter()
    rng = np.random.Generator(np.random.Philox(key=1002))
    k_max = 1.0 / math.sqrt(2.0)
    draws = [0.0, k_max * (1.0 - 1e-4)]
    draws += list(rng.uniform(0.0, k_max - 1e-3, 48))
    worst_dev = worst_drift = worst_rel8 = 0.0
    for i, k in enumerate(draws):
        mp = ModelParams(omega=OMEGAS[i % 3], sigma=1.0)
        c = rng.uniform(-1.5, 1.5)
        a = math.sqrt((1.0 + c * c) / (1.0 - 2.0 * k * k))
        gp = geo.params_from_constants(
            a, rng.uniform(0.4, 4.0), c, rng.uniform(-2.0, 2.0), "timelike", mp)
        s_max = 20.0 / (abs(a) * mp.omega)
        # step chosen from the truncation envelope; the extra factor of a
        # covers the velocity components, whose magnitude grows with a
        ds = min(1e-3, (1e-8 / (40.0 * (a * mp.omega) ** 5 * s_max
                                * max(1.0, a))) ** 0.25)
        path = geo.ode_integrate(geo.timelike_eval(gp, 0.0, mp), s_max, ds, mp,
                                 stride=10)
        pts, vels = geo.geodesic_path(gp, path.s, mp)
        worst_dev = max(worst_dev,
                        np.max(np.abs(path.points - pts)),
                        np.max(np.abs(path.velocities - vels)))
        worst_drift = max(worst_drift,
                          *(path.max_drift[key] for key in ("a", "b", "c", "Y")))
        worst_rel8 = max(worst_rel8,
                         np.max(np.abs(geo.relation8_residual(gp, path.s, mp))))
    wall = time.perf_counter() - t0
    passed = (worst_dev < 1e-6 and worst_drift < 1e-8 and worst_rel8 < 1e-10
              and wall < 30.0)
    conclude(2, "timelike closed form vs RK4", passed,
             f"deviation {worst_dev:.1e}, drift {worst_drift:.1e}, "
             f"orbit relation {worst_rel8:.1e}, {wall:.2f}s")


# ---------------------------------------------------------------------------
# 3: time gap at x-returns
# ---------------------------------------------------------------------------


def test_criterion_03_recurrence_time_gap():
    rng = np.random.Generator(np.random.Philox(key=1003))
    worst_eq = 0.0
    min_gap_multi = math.inf
    for i in range(10):
        mp = ModelParams(omega=OMEGAS[i % 3], sigma=1.0)
        k = 0.0 if i == 0 else rng.uniform(0.05, 0.68)
        c = rng.uniform(-1.2, 1.2)
        a = math.sqrt((1.0 + c * c) / (1.0 - 2.0 * k * k))
        gp = geo.params_from_constants(
            a, rng.uniform(0.5, 3.0), c, rng.uniform(-1.0, 1.0), "timelike", mp)
        period = geo.xy_period(gp, mp)
        s0 = rng.uniform(0.0, period)
        zeta = math.sqrt(1.0 - k * k)
        for n in (1, 2, 3):
            sampled = abs(geo.timelike_eval(gp, s0 + n * period, mp).point[0]
                          - geo.timelike_eval(gp, s0, mp).point[0])
            formula = (n * math.pi / mp.omega) * abs(2.0 - 1.0 / zeta)
            worst_eq = max(worst_eq,
                           abs(sampled - formula),
                           abs(sampled - geo.recurrence_time_gap(gp, mp, n)))
            # sharp single-return floor; from the second return on the
            # accumulated gap always clears pi / omega
            floor = ((2.0 - math.sqrt(2.0)) if n == 1 else 1.0) * math.pi
            assert sampled * mp.omega >= floor - 1e-9
            if n >= 2:
                min_gap_multi = min(min_gap_multi, sampled * mp.omega / math.pi)
        if i == 0:
            # circular orbit: the single return closes the gap exactly
            one = geo.recurrence_time_gap(gp, mp, 1)
            assert abs(one - math.pi / mp.omega) < 1e-9
    passed = worst_eq < 1e-6 and min_gap_multi >= 1.0
    conclude(3, "x-return time gaps", passed,
             f"formula deviation {worst_eq:.1e}, "
             f"min multi-return gap {min_gap_multi:.3f} pi/omega")


# ---------------------------------------------------------------------------
# 4: light rays hit the cylinder and the advertised direction
# ---------------------------------------------------------------------------


def test_criterion_04_ray_cylinder_and_slope():
    worst_res = 0.0
    worst_slope = 0.0
    taus = np.linspace(0.0, 200.0, 2001)
    for omega in (1.0, 2.0):
        mp = ModelParams(omega=omega, sigma=1.0)
        for ell in ELLS:
            B = geo.ImpactParameter(ell, 1.7, 0.4)
            pts, vels = geo.geodesic_path(geo.lightlike_params(B, 0.0, 0.0, mp),
                                          taus, mp)
            res = geo.ray_convergence_residuals(pts, vels, B, mp)
            worst_res = max(worst_res,
                            *(np.max(np.abs(v)) for v in res.values()))
            if omega == 1.0:
                slope_err = abs(geo.measured_ray_slope(B, 1e3, mp)
                                - geo.ray_direction_slope(ell))
                worst_slope = max(worst_slope, slope_err)
    passed = worst_res < 1e-10 and worst_slope < 1e-3
    conclude(4, "ray cylinder and (t,z) slope", passed,
             f"residual {worst_res:.1e}, slope error {worst_slope:.1e}")


# ---------------------------------------------------------------------------
# 5: boundary group action and the chart invariant
# ---------------------------------------------------------------------------


def chart_invariant_ratio(B, tau, mp, h_step=1e-5):
    """Killing-charge ratio along a ray, from the rotational chart alone."""
    states = [geo.lightlike_eval(B, 0.0, 0.0, tau + j * h_step, mp)
              for j in (-1, 0, 1)]
    charts = [geom.to_rotational(st.point, mp) for st in states]

    def unwrap(phi, ref):
        while phi - ref > math.pi:
            phi -= 2.0 * math.pi
        while phi - ref < -math.pi:
            phi += 2.0 * math.pi
        return phi

    u_dot = (charts[2].u - charts[0].u) / (2.0 * h_step)
    phi_dot = (unwrap(charts[2].phi, charts[1].phi)
               - unwrap(charts[0].phi, charts[1].phi)) / (2.0 * h_step)
    r = charts[1].r
    charge = u_dot + 2.0 * math.sinh(r) ** 2 * phi_dot
    mixed = 2.0 * charge * math.cosh(2.0 * r) - math.sinh(2.0 * r) ** 2 * phi_dot
    return mixed / charge


def test_criterion_05_boundary_action_invariant():
    rng = np.random.Generator(np.random.Philox(key=1005))
    mp = ModelParams(omega=1.0, sigma=1.0)
    worst_group = 0.0
    for _ in range(200):
        B = (rng.uniform(-0.99, 0.99), rng.uniform(0.3, 4.0),
             rng.uniform(-2.0, 2.0))
        phi1, phi2 = rng.uniform(-3.0, 3.0, 2)
        once = geom.apply_isometry_boundary(
            geom.rotation(phi2),
            geom.apply_isometry_boundary(geom.rotation(phi1), B, mp), mp)
        joint = geom.apply_isometry_boundary(geom.rotation(phi1 + phi2), B, mp)
        worst_group = max(worst_group,
                          np.max(np.abs(np.subtract(once, joint))))
        x0 = rng.uniform(-1.5, 1.5)
        back = geom.apply_isometry_boundary(
            geom.dilatation(-x0),
            geom.apply_isometry_boundary(geom.dilatation(x0), B, mp), mp)
        worst_group = max(worst_group, np.max(np.abs(np.subtract(back, B))))
    worst_alpha = 0.0
    rays = (geo.ImpactParameter(0.4, 1.7, 0.3),
            geo.ImpactParameter(-0.5, 1.3, -0.8),
            geo.ImpactParameter(0.0, 2.5, 1.2))
    for omega in (1.0, 2.0):
        mpx = ModelParams(omega=omega, sigma=1.0)
        for B in rays:
            alpha = geom.boundary_rotation_center(B, mpx)
            for tau in (3.0, 7.0, 20.0, 60.0):
                worst_alpha = max(
                    worst_alpha,
                    abs(chart_invariant_ratio(B, tau, mpx) - alpha))
    passed = worst_group < 1e-10 and worst_alpha < 1e-6
    conclude(5, "boundary action and invariant", passed,
             f"group residual {worst_group:.1e}, "
             f"invariant drift {worst_alpha:.1e}")


# ---------------------------------------------------------------------------
# 6: noise factorization, shell projection, noiseless limit
# ---------------------------------------------------------------------------


def test_criterion_06_noise_structure(mp):
    rng = np.random.Generator(np.random.Philox(key=1006))

    def draw_state(degenerate: bool):
        a = rng.uniform(1.05, 6.0)
        if degenerate:
            zdot = math.sqrt(a * a - 1.0 - 1e-12 * a * a)
        else:
            zdot = rng.uniform(-0.95, 0.95) * math.sqrt(a * a - 1.0)
        return dif.shell_state(rng.uniform(-2, 2), rng.uniform(-1.5, 1.5),
                               rng.uniform(-2, 2), rng.uniform(-2, 2),
                               a=a, zdot=zdot, gamma=rng.uniform(-6, 6), mp=mp)

    worst_fac = worst_eig = worst_shell = 0.0
    for i in range(430):
        st = draw_state(degenerate=i >= 400)
        K = dif.covariation_matrix(st, mp)
        S = dif.noise_factorization(st, mp)
        worst_fac = max(worst_fac, np.max(np.abs(S @ S.T - K)))
        worst_eig = max(worst_eig,
                        abs(np.linalg.eigvalsh(K)[0]) / np.trace(K))
        bumped = dif.ReducedState(
            s=st.s, t=st.t, x=st.x, y=st.y, z=st.z, a=st.a, b=st.b,
            xdot=st.xdot * (1.0 + 1e-4), zdot=st.zdot * (1.0 - 2e-4))
        proj = dif.project_to_shell(bumped, mp)
        worst_shell = max(worst_shell,
                          abs(dif.shell_residual(proj, mp))
                          / (1.0 + proj.a ** 2))
    mp0 = ModelParams(omega=1.0, sigma=0.0)
    init = dif.shell_state(0.0, 0.2, -0.1, 0.3, a=1.6, zdot=0.4, gamma=0.3,
                           mp=mp0)
    rec = dif.simulate_path(init, s_max=5.0, ds=1e-4, seed=3, mp=mp0,
                            stride=100)
    pts, _ = geo.geodesic_path(
        geo.conserved_from_state(dif.full_state(init, mp0), mp0), rec.s, mp0)
    got = np.column_stack([rec.t, rec.x, rec.y, rec.z])
    worst_free = np.max(np.abs(got - pts[:, :4]))
    passed = (worst_fac < 1e-10 and worst_eig < 1e-8 and worst_shell < 1e-12
              and worst_free < 1e-4)
    conclude(6, "noise factorization and projection", passed,
             f"factorization {worst_fac:.1e}, null eigenvalue {worst_eig:.1e}, "
             f"shell residual {worst_shell:.1e}, "
             f"noiseless deviation {worst_free:.1e}")


# ---------------------------------------------------------------------------
# 7: ensemble growth rates at horizon 10
# ---------------------------------------------------------------------------


def test_criterion_07_ensemble_growth(ensemble):
    report = asym.ensemble_growth_test(ensemble["recs10"], ensemble["mp"])
    zs = {key: abs(report.details[key]["z"])
          for key in ("log_abs_a", "log_abs_b", "log_abs_zdot")}
    passed = report.passed and all(z <= 3.0 for z in zs.values())
    conclude(7, "ensemble growth rates", passed,
             "slopes "
             + ", ".join(
                 f"{key.removeprefix('log_abs_')}"
                 f"={report.details[key]['mean_slope']:.3f} (|z|={z:.2f})"
                 for key, z in zs.items()))


# ---------------------------------------------------------------------------
# 8: radial SDE drift and quadratic variation by lambda bin
# ---------------------------------------------------------------------------


def test_criterion_08_lambda_drift(ensemble):
    report = asym.lambda_drift_test(ensemble["recs10"], ensemble["mp"])
    rows = [row for row in report.details["bins"] if "skipped" not in row]
    worst_z = max(max(abs(row["drift_z"]), abs(row["qv_z"])) for row in rows)
    passed = report.passed and len(rows) >= 1 and worst_z <= 3.0
    conclude(8, "radial drift and quadratic variation", passed,
             f"{len(rows)} bins, worst |z| {worst_z:.2f}")


# ---------------------------------------------------------------------------
# 9: boundary data concentrate as the horizon doubles
# ---------------------------------------------------------------------------


def test_criterion_09_boundary_convergence(ensemble):
    disp10 = np.array([est.dispersion for est in ensemble["est10"]])
    disp20 = np.array([est.dispersion for est in ensemble["est20"]])
    ratios = np.median(disp10 / disp20, axis=0)
    cyl = np.median([
        abs(asym.cylinder_diagnostic(rec, est, ensemble["mp"])[1])
        for rec, est in zip(ensemble["recs20"], ensemble["est20"])])
    ell_max = max(abs(est.ell_hat)
                  for est in ensemble["est10"] + ensemble["est20"])
    passed = (bool(np.all(ratios >= 2.0)) and cyl < 0.05 and ell_max < 1.0
              and not ensemble["aborted"])
    conclude(9, "boundary data concentration", passed,
             f"dispersion ratios {ratios[0]:.0f}/{ratios[1]:.0f}/"
             f"{ratios[2]:.0f}, cylinder median {cyl:.2e}, "
             f"max |ell| {ell_max:.3f}")


# ---------------------------------------------------------------------------
# 10: hitting a prescribed boundary target from a fast launch
# ---------------------------------------------------------------------------


def test_criterion_10_target_concentration(tmp_path):
    worst_fraction = 1.0
    targets = ((0.5, 1.0, 0.0), (-0.4, 2.0, 1.0), (0.0, 0.6, -1.5))
    for i, (ell, rho, Y) in enumerate(targets):
        cfg = h.RunConfig.from_mapping(
            {"scenario": "ensemble", "s_max": 10.0, "n_paths": 200,
             "a0": 1000.0, "ell0": ell, "rho0": rho, "Y0": Y,
             "seed": 12345 + i, "out_dir": str(tmp_path)}
        )
        mp, _, recs, aborted = h.simulate_ensemble(cfg)
        assert not aborted
        report = asym.concentration_report(
            [asym.estimate_boundary(rec) for rec in recs], (ell, rho, Y))
        worst_fraction = min(worst_fraction, report.value)
        if not report.passed:
            break
    passed = worst_fraction >= 0.95
    conclude(10, "concentration near the target", passed,
             f"worst in-ball fraction {worst_fraction:.3f} over "
             f"{len(targets)} targets")


# ---------------------------------------------------------------------------
# 11: the a-marginal matches its scalar diffusion
# ---------------------------------------------------------------------------


def test_criterion_11_marginal_law(mp):
    n = 10_000
    init = dif.shell_state(0.0, 0.0, 0.0, 0.0, a=2.0, zdot=0.0, gamma=0.0,
                           mp=mp)
    base = np.random.Philox(key=2026)
    full = np.array([
        dif.simulate_path(init, 1.0, 1e-3, np.random.Generator(base.jumped(i)),
                          mp, stride=1000).a[-1]
        for i in range(n)
    ])
    scalar = dif.simulate_subdiffusion("a", [2.0], n, 1.0, 1e-3, 4097, mp)[:, 0]
    report = asym.ks_report(full, scalar, "a marginal", "scalar comparison")
    conclude(11, "a-marginal law", report.passed,
             f"KS p-value {report.value:.3f} at n={n}")
