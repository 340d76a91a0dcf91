"""Configuration, orchestration and reporting behind the command line.

A run is described by a flat key-value config (TOML syntax, every key at top
level) possibly overridden by CLI flags, and produces self-describing
artifacts in an output directory: CSV tables with header rows, JSON reports
embedding the config hash and seed, and SVG plots rendered from the tables.
Plots are conveniences; every pass/fail decision lives in the JSON checks.

Exit code convention: 0 all checks passed, 1 at least one diagnostic failed,
2 the configuration was invalid.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import asymptotics as asy
from . import diffusion as dif
from . import geodesics as geo
from .asymptotics import DiagnosticReport
from .geometry import (
    SQRT2,
    ModelParams,
    christoffel_at,
    dust_velocity,
    einstein_residual,
    inverse_metric_at,
    metric_at,
    ricci_at,
    scalar_curvature,
)

__all__ = [
    "ConfigError",
    "RunConfig",
    "EnsembleSummary",
    "config_hash",
    "resolve_out_dir",
    "initial_from_boundary_target",
    "build_initial",
    "run_verify_geometry",
    "run_geodesic",
    "run_diffuse",
    "run_ensemble",
    "run_demo_transitivity",
    "OUT_DIR_ENV",
]

OUT_DIR_ENV = "GODELSIM_OUT"


class ConfigError(ValueError):
    """Invalid run configuration; maps to exit code 2."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

# schema: key -> (python type, default).  The config file is flat TOML: only
# scalar keys at top level, no tables.  CLI flags override file values.
_SCHEMA: dict[str, tuple[type, object]] = {
    "scenario": (str, "diffuse"),
    "omega": (float, 1.0),
    "sigma": (float, 1.0),
    "s_max": (float, 10.0),
    "ds": (float, 1e-3),
    "stride": (int, 10),
    "n_paths": (int, 200),
    "seed": (int, 12345),
    "out_dir": (str, ""),
    "backend": (str, ""),
    "tol_scale": (float, 1.0),
    "window_fraction": (float, 0.5),
    # initial data for the diffusion scenarios
    "initial_kind": (str, "target"),
    "a0": (float, 2.0),
    "ell0": (float, 0.0),
    "rho0": (float, 2.0),
    "Y0": (float, 0.0),
    "gamma0": (float, 0.0),
    "t0": (float, 0.0),
    "x0": (float, 0.0),
    "y0": (float, 0.0),
    "z0": (float, 0.0),
    "zdot0": (float, 0.0),
    # geodesic scenario
    "geo_kind": (str, "timelike"),
    "geo_a": (float, 1.5),
    "geo_b": (float, 3.0),
    "geo_c": (float, 0.5),
    "geo_Y": (float, 0.0),
    # ensemble extras
    "abort_fraction": (float, 0.01),
    "concentration": (bool, False),
    "concentration_radius": (float, 0.05),
    # verify-geometry extras
    "n_points": (int, 1000),
    # transitivity demo
    "from_t": (float, 0.0),
    "from_x": (float, 0.0),
    "from_y": (float, 0.0),
    "from_z": (float, 0.0),
    "to_t": (float, 0.0),
    "to_x": (float, 0.0),
    "to_y": (float, 0.0),
    "to_z": (float, 0.0),
    "demo_a": (float, 1.5),
}

_SCENARIOS = ("verify-geometry", "geodesic", "diffuse", "ensemble", "demo-transitivity")


@dataclass(frozen=True)
class RunConfig:
    """One flat, validated run configuration (see _SCHEMA for the fields)."""

    scenario: str
    omega: float
    sigma: float
    s_max: float
    ds: float
    stride: int
    n_paths: int
    seed: int
    out_dir: str
    backend: str
    tol_scale: float
    window_fraction: float
    initial_kind: str
    a0: float
    ell0: float
    rho0: float
    Y0: float
    gamma0: float
    t0: float
    x0: float
    y0: float
    z0: float
    zdot0: float
    geo_kind: str
    geo_a: float
    geo_b: float
    geo_c: float
    geo_Y: float
    abort_fraction: float
    concentration: bool
    concentration_radius: float
    n_points: int
    from_t: float
    from_x: float
    from_y: float
    from_z: float
    to_t: float
    to_x: float
    to_y: float
    to_z: float
    demo_a: float

    @classmethod
    def from_mapping(cls, mapping: dict) -> "RunConfig":
        unknown = sorted(set(mapping) - set(_SCHEMA))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        values = {}
        for key, (typ, default) in _SCHEMA.items():
            raw = mapping.get(key, default)
            values[key] = _coerce(key, raw, typ)
        cfg = cls(**values)
        cfg.validate()
        return cfg

    @classmethod
    def from_toml(cls, text: str) -> "RunConfig":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        try:
            mapping = tomllib.loads(text)
        except Exception as exc:
            raise ConfigError(f"config is not valid TOML: {exc}") from exc
        for key, val in mapping.items():
            if isinstance(val, dict):
                raise ConfigError(f"config must be flat, found table [{key}]")
        return cls.from_mapping(mapping)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        return cls.from_toml(text)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_toml(self) -> str:
        lines = []
        for key in _SCHEMA:
            val = getattr(self, key)
            if isinstance(val, bool):
                lines.append(f"{key} = {'true' if val else 'false'}")
            elif isinstance(val, str):
                lines.append(f"{key} = {json.dumps(val)}")
            else:
                lines.append(f"{key} = {val!r}")
        return "\n".join(lines) + "\n"

    def replace(self, **changes) -> "RunConfig":
        cfg = dataclasses.replace(self, **changes)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.scenario not in _SCENARIOS:
            raise ConfigError(f"scenario must be one of {_SCENARIOS}, got {self.scenario!r}")
        if not self.omega > 0.0:
            raise ConfigError(f"omega must be positive, got {self.omega}")
        if self.sigma < 0.0:
            raise ConfigError(f"sigma must be nonnegative, got {self.sigma}")
        if not self.ds > 0.0:
            raise ConfigError(f"ds must be positive, got {self.ds}")
        if not self.s_max > 0.0:
            raise ConfigError(f"s_max must be positive, got {self.s_max}")
        if self.stride < 1:
            raise ConfigError(f"stride must be at least 1, got {self.stride}")
        if self.n_paths < 1:
            raise ConfigError(f"n_paths must be at least 1, got {self.n_paths}")
        if self.tol_scale < 0.0:
            raise ConfigError(f"tol_scale must be nonnegative, got {self.tol_scale}")
        if not 0.0 < self.window_fraction <= 1.0:
            raise ConfigError(f"window_fraction must lie in (0, 1], got {self.window_fraction}")
        if self.initial_kind not in ("target", "shell"):
            raise ConfigError(f"initial_kind must be 'target' or 'shell', got {self.initial_kind!r}")
        if self.geo_kind not in ("timelike", "lightlike"):
            raise ConfigError(f"geo_kind must be 'timelike' or 'lightlike', got {self.geo_kind!r}")
        if not 0.0 <= self.abort_fraction <= 1.0:
            raise ConfigError(f"abort_fraction must lie in [0, 1], got {self.abort_fraction}")
        if self.backend not in ("", "c", "compiled", "cython", "py", "python", "pure"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.n_points < 1:
            raise ConfigError(f"n_points must be at least 1, got {self.n_points}")


def _coerce(key: str, raw, typ: type):
    if typ is float:
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise ConfigError(f"config key {key} must be a number, got {raw!r}")
        val = float(raw)
        if not math.isfinite(val):
            raise ConfigError(f"config key {key} must be finite, got {raw!r}")
        return val
    if typ is int:
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise ConfigError(f"config key {key} must be an integer, got {raw!r}")
        if isinstance(raw, float) and not raw.is_integer():
            raise ConfigError(f"config key {key} must be an integer, got {raw!r}")
        return int(raw)
    if typ is bool:
        if not isinstance(raw, bool):
            raise ConfigError(f"config key {key} must be true or false, got {raw!r}")
        return raw
    if typ is str:
        if not isinstance(raw, str):
            raise ConfigError(f"config key {key} must be a string, got {raw!r}")
        return raw
    raise AssertionError(f"unhandled schema type {typ}")


def config_hash(cfg: RunConfig) -> str:
    """Short stable digest of the full configuration."""
    blob = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def resolve_out_dir(flag_value: str | None, file_value: str = "") -> str:
    """Output directory precedence: CLI flag, then env var, then config file."""
    if flag_value:
        return flag_value
    env = os.environ.get(OUT_DIR_ENV, "")
    if env:
        return env
    if file_value:
        return file_value
    return "godelsim-out"


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------


def initial_from_boundary_target(ell: float, rho: float, Y: float, a: float,
                                 mp: ModelParams, t: float = 0.0, z: float = 0.0) -> dif.ReducedState:
    """On-shell initial state aimed at the boundary point (ell, rho, Y).

    Places the path at the phase gamma = 0 of its starting circle: x solves
    e^{sqrt2 w x} = rho / 2 so that b / a = rho, zdot = ell a, and y is read
    off from the centre relation Y = y + sqrt2 xdot / (w b).  With |a| large
    the whole early path stays close to this target.
    """
    if not rho > 0.0:
        raise ConfigError(f"rho must be positive, got {rho}")
    if abs(a) <= 1.0:
        raise ConfigError(f"|a0| must exceed 1, got {a}")
    m2 = a * a * (1.0 - ell * ell) - 1.0
    if m2 < 0.0:
        raise ConfigError(
            f"target needs a0^2 (1 - ell^2) >= 1: got a0={a}, ell={ell}")
    w = mp.omega
    x = math.log(0.5 * rho) / (SQRT2 * w)
    zdot = ell * a
    xdot = a * math.sqrt(m2) / abs(a)  # gamma = 0, so xdot = a A
    b = a * rho
    y = Y - SQRT2 * xdot / (w * b)
    return dif.shell_state(t=t, x=x, y=y, z=z, a=a, zdot=zdot, gamma=0.0, mp=mp)


def build_initial(cfg: RunConfig) -> tuple[ModelParams, dif.ReducedState]:
    """ModelParams and validated initial state from a config."""
    mp = ModelParams(omega=cfg.omega, sigma=cfg.sigma)
    try:
        if cfg.initial_kind == "target":
            state = initial_from_boundary_target(
                cfg.ell0, cfg.rho0, cfg.Y0, cfg.a0, mp, t=cfg.t0, z=cfg.z0)
        else:
            state = dif.shell_state(
                t=cfg.t0, x=cfg.x0, y=cfg.y0, z=cfg.z0,
                a=cfg.a0, zdot=cfg.zdot0, gamma=cfg.gamma0, mp=mp)
        state.validate(mp)
    except (ValueError, ConfigError) as exc:
        raise ConfigError(f"invalid initial state: {exc}") from exc
    return mp, state


# ---------------------------------------------------------------------------
# artifact helpers
# ---------------------------------------------------------------------------


def _ensure_dir(out_dir) -> Path:
    path = Path(out_dir)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {path}: {exc}") from exc
    return path


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=False) + "\n")


def _write_csv(path: Path, columns: dict) -> None:
    names = list(columns)
    data = np.column_stack([np.asarray(columns[n], dtype=float) for n in names])
    np.savetxt(path, data, delimiter=",", header=",".join(names), comments="", fmt="%.17g")


def _payload(cfg: RunConfig, checks: Sequence[DiagnosticReport], **extra) -> dict:
    out = {
        "scenario": cfg.scenario,
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "checks": [c.to_dict() for c in checks],
        "all_passed": all(c.passed for c in checks),
    }
    out.update(extra)
    return out


def _report(name: str, law: str, value: float, tol: float,
            expected: float = 0.0, details: dict | None = None,
            passed: bool | None = None) -> DiagnosticReport:
    if passed is None:
        passed = abs(value - expected) <= tol
    return DiagnosticReport(name=name, law=law, value=float(value), expected=float(expected),
                            tol=float(tol), passed=bool(passed), details=details or {})


# ---------------------------------------------------------------------------
# scenario: verify-geometry
# ---------------------------------------------------------------------------


def _fd_christoffel(point: np.ndarray, mp: ModelParams, h: float = 1e-6) -> np.ndarray:
    """Central-difference connection from the metric alone."""
    dg = np.zeros((4, 4, 4))
    for m in range(4):
        e = np.zeros(4)
        e[m] = h
        dg[m] = (metric_at(point + e, mp) - metric_at(point - e, mp)) / (2.0 * h)
    # S[l, i, j] = d_i g_lj + d_j g_li - d_l g_ij
    S = dg.transpose(1, 0, 2) + dg.transpose(1, 2, 0) - dg
    return 0.5 * np.einsum("kl,lij->kij", inverse_metric_at(point, mp), S)


def run_verify_geometry(cfg: RunConfig) -> tuple[int, dict]:
    """All geometry identities at random points; tolerances scaled by tol_scale."""
    mp = ModelParams(omega=cfg.omega, sigma=cfg.sigma)
    rng = np.random.Generator(np.random.Philox(key=cfg.seed))
    pts = rng.uniform(-3.0, 3.0, size=(cfg.n_points, 4))
    eye = np.eye(4)
    w2 = mp.omega**2

    # all comparisons are per-entry relative: the metric entries reach
    # e^{2 sqrt2 w |x|} (about 2.4e7 at w=2, x=3), where plain roundoff
    # already exceeds the absolute tolerances
    errs = {"metric_inverse": 0.0, "christoffel_fd": 0.0, "ricci_closed_form": 0.0,
            "scalar_curvature": 0.0, "field_equations": 0.0}
    for p in pts:
        g = metric_at(p, mp)
        gi = inverse_metric_at(p, mp)
        scale = 1.0 + np.abs(g) @ np.abs(gi)
        errs["metric_inverse"] = max(
            errs["metric_inverse"], float(np.max(np.abs(g @ gi - eye) / scale)))
        G = christoffel_at(p, mp)
        fd = _fd_christoffel(p, mp)
        errs["christoffel_fd"] = max(
            errs["christoffel_fd"], float(np.max(np.abs(fd - G) / (1.0 + np.abs(G)))))
        u = dust_velocity(p, mp)
        ric = ricci_at(p, mp)
        closed = np.outer(u, u)
        errs["ricci_closed_form"] = max(
            errs["ricci_closed_form"],
            float(np.max(np.abs(ric - closed) / (1.0 + np.abs(closed)))))
        scal_scale = 1.0 + float(np.abs(gi * ric).sum())
        errs["scalar_curvature"] = max(
            errs["scalar_curvature"], abs(scalar_curvature(p, mp) - 2.0 * w2) / scal_scale)
        ein_scale = 1.0 + np.abs(ric) + 0.5 * abs(2.0 * w2) * np.abs(g) + w2 * np.abs(g) + np.abs(closed)
        errs["field_equations"] = max(
            errs["field_equations"], float(np.max(np.abs(einstein_residual(p, mp)) / ein_scale)))

    ts = cfg.tol_scale
    laws = {
        "metric_inverse": ("the metric times its inverse is the identity", 1e-12),
        "christoffel_fd": ("the connection matches central differences of the metric", 1e-6),
        "ricci_closed_form": ("the Ricci tensor equals the dust outer product u (x) u", 1e-10),
        "scalar_curvature": ("the scalar curvature equals 2 omega^2 everywhere", 1e-10),
        "field_equations": ("R_ij - R/2 g_ij + omega^2 g_ij = u_i u_j (dust field equations)", 1e-10),
    }
    checks = [
        _report(name, law, errs[name], tol * ts,
                details={"n_points": cfg.n_points, "omega": cfg.omega})
        for name, (law, tol) in laws.items()
    ]
    checks.append(_report(
        "scalar_curvature_value",
        "reported scalar curvature value at the first sample point",
        scalar_curvature(pts[0], mp), tol=1e-10 * ts, expected=2.0 * w2))

    out = _ensure_dir(resolve_out_dir(cfg.out_dir))
    payload = _payload(cfg, checks, max_errors=errs)
    _write_json(out / "verify_geometry.json", payload)
    return (0 if payload["all_passed"] else 1), payload


# ---------------------------------------------------------------------------
# scenario: geodesic
# ---------------------------------------------------------------------------


def _geodesic_params(cfg: RunConfig, mp: ModelParams) -> geo.GeodesicParams:
    try:
        if cfg.geo_kind == "timelike":
            if not cfg.geo_a**2 > 1.0 + cfg.geo_c**2:
                raise ConfigError(
                    f"timelike spec violates a^2 > 1 + c^2: a={cfg.geo_a}, c={cfg.geo_c}")
            return geo.params_from_constants(
                cfg.geo_a, cfg.geo_b, cfg.geo_c, cfg.geo_Y, "timelike", mp,
                t0=cfg.t0, z0=cfg.z0)
        B = geo.ImpactParameter(cfg.ell0, cfg.rho0, cfg.Y0)
        return geo.lightlike_params(B, T0=cfg.t0, Z0=cfg.z0, mp=mp)
    except ValueError as exc:
        raise ConfigError(f"invalid geodesic spec: {exc}") from exc


def run_geodesic(cfg: RunConfig) -> tuple[int, dict]:
    """Closed-form path vs the independent RK4 integration, plus plots."""
    mp = ModelParams(omega=cfg.omega, sigma=cfg.sigma)
    gp = _geodesic_params(cfg, mp)
    ts = cfg.tol_scale

    n_rec = max(int(math.ceil(cfg.s_max / (cfg.ds * cfg.stride))), 2)
    s = np.arange(n_rec + 1) * (cfg.ds * cfg.stride)
    pts, vel = geo.geodesic_path(gp, s, mp)
    state0 = geo.PhaseState(pts[0], vel[0])
    ode = geo.ode_integrate(state0, s_max=float(s[-1]), step=cfg.ds, mp=mp, stride=cfg.stride)
    n = min(len(s), len(ode.s))
    dev = np.abs(pts[:n] - ode.points[:n])
    deviation_max = float(np.max(dev))
    drift = {k: float(v) for k, v in ode.max_drift.items()}
    rel8 = float(np.max(np.abs(geo.relation8_residual(gp, s, mp))))

    # the RK4 oracle carries O(s_max ds^4) truncation error with a prefactor
    # growing like the orbit frequency |a| w to the fifth power; widen the
    # band accordingly for long or coarse runs (defaults stay at 1e-6 / 1e-8)
    rk4_envelope = 40.0 * (abs(gp.a) * mp.omega) ** 5 * float(s[-1]) * cfg.ds**4
    checks = [
        _report("closed_form_vs_rk4",
                "closed-form geodesic agrees with the fixed-step RK4 oracle",
                deviation_max, ts * max(1e-6, rk4_envelope)),
        _report("conserved_drift",
                "the RK4 path conserves (a, b, c, Y) and the pseudo-norm",
                max(drift.values()), ts * max(1e-8, rk4_envelope)),
        _report("orbit_circle",
                "the (x, y) projection stays on its circle (radius k) exactly",
                rel8, 1e-10 * ts),
    ]
    extra: dict = {"params": {"a": gp.a, "b": gp.b, "c": gp.c, "Y": gp.Y, "kind": gp.kind,
                              "k": gp.k, "xy_period": geo.xy_period(gp, mp)},
                   "deviation_max": deviation_max, "conserved_drift": drift}
    if gp.kind == "lightlike":
        B = geo.impact_parameter(gp)
        tau_end = float(s[-1])
        measured = geo.measured_ray_slope(B, tau_end, mp)
        exact = geo.ray_direction_slope(B.ell)
        # finite-horizon envelope: the (t, z) ratio carries a bounded
        # oscillation, so the band tightens like 1/tau
        tol_slope = ts * max(1e-3, 8.0 / (mp.omega * tau_end))
        checks.append(_report(
            "ray_slope",
            "the (t, z) direction of a ray approaches ell / (sqrt(2 (1 + ell^2)) - 1)",
            measured, tol_slope, expected=exact,
            details={"tau": tau_end, "ell": B.ell}))
        extra["ray"] = {"ell": B.ell, "rho": B.rho, "Y": B.Y,
                        "slope_measured": measured, "slope_exact": exact}

    out = _ensure_dir(resolve_out_dir(cfg.out_dir))
    table = geo.path_table(s, pts, vel, mp)
    for j, cname in enumerate(("dev_t", "dev_x", "dev_y", "dev_z")):
        col = np.zeros(len(s))
        col[:n] = dev[:n, j]
        table[cname] = col
    _write_csv(out / "geodesic.csv", table)
    _plot_projection(out / "geodesic_xy.svg", table["x"], table["y"], "x", "y",
                     ode.points[:n, 1], ode.points[:n, 2])
    _plot_projection(out / "geodesic_tz.svg", table["t"], table["z"], "t", "z",
                     ode.points[:n, 0], ode.points[:n, 3])
    payload = _payload(cfg, checks, **extra)
    _write_json(out / "geodesic.json", payload)
    return (0 if payload["all_passed"] else 1), payload


# ---------------------------------------------------------------------------
# scenario: diffuse
# ---------------------------------------------------------------------------


def _cylinder_report(med: float, sigma: float, a0: float, ts: float) -> DiagnosticReport:
    if sigma > 0.0:
        return _report("cylinder_residual",
                       "the path settles onto the cylinder of its estimated ray",
                       med, 0.05 * ts)
    # a geodesic sits at constant distance k^2 - (1 - ell^2)/2 = -1/(2 a^2)
    return _report("cylinder_residual",
                   "a geodesic keeps constant offset -1/(2 a^2) from its ray cylinder",
                   med, 1e-8 * ts, expected=-0.5 / (a0 * a0))


def run_diffuse(cfg: RunConfig) -> tuple[int, dict]:
    """One path: CSV record, boundary estimate, diagnostics, plots."""
    mp, initial = build_initial(cfg)
    out = _ensure_dir(resolve_out_dir(cfg.out_dir))
    t_begin = time.perf_counter()
    try:
        rec = dif.simulate_path(initial, s_max=cfg.s_max, ds=cfg.ds, seed=cfg.seed,
                                mp=mp, stride=cfg.stride, backend=cfg.backend or None)
    except dif.PathAborted as exc:
        payload = _payload(cfg, [_report(
            "path_completed", "the path runs to s_max without aborting",
            0.0, 0.5, expected=1.0)],
            abort={"reason": str(exc),
                   "samples_recorded": 0 if exc.record is None else exc.record.n_samples})
        _write_json(out / "diffuse.json", payload)
        return 1, payload
    wall = time.perf_counter() - t_begin

    est = asy.estimate_boundary(rec, cfg.window_fraction)
    series, med = asy.cylinder_diagnostic(rec, est, mp, cfg.window_fraction)
    checks = [
        _report("ray_slope_bounded", "the estimated |ell| stays strictly below 1",
                abs(est.ell_hat), 1.0, passed=abs(est.ell_hat) < 1.0),
        _cylinder_report(med, mp.sigma, initial.a, cfg.tol_scale),
        asy.growth_diagnostics(rec, mp, cfg.window_fraction),
        asy.gamma_growth_test(rec, mp, cfg.window_fraction),
        asy.lambda_drift_test(rec, mp),
    ]
    if mp.sigma > 0.0:
        checks.append(asy.skorohod_decay_report(rec, est, mp))

    rec.to_csv(out / "diffuse.csv")
    _plot_diffusion(out / "diffuse_diagnostics.svg", rec, series)
    payload = _payload(
        cfg, checks,
        backend=rec.backend,
        estimate={"ell": est.ell_hat, "rho": est.rho_hat, "Y": est.Y_hat,
                  "tail_window": list(est.tail_window),
                  "dispersion": list(est.dispersion)},
        runtime={"wall_time_s": wall, "n_samples": rec.n_samples,
                 "n_rejections": rec.n_rejections, "n_chart2_steps": rec.n_chart2_steps},
    )
    _write_json(out / "diffuse.json", payload)
    return (0 if payload["all_passed"] else 1), payload


# ---------------------------------------------------------------------------
# scenario: ensemble
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnsembleSummary:
    """Aggregated outcome of an ensemble run."""

    estimates: list
    reports: list
    n_paths_configured: int
    n_paths_completed: int
    aborted: list
    wall_time_s: float
    total_rejections: int
    total_chart2_steps: int
    backend: str

    def to_dict(self) -> dict:
        return {
            "n_paths_configured": self.n_paths_configured,
            "n_paths_completed": self.n_paths_completed,
            "aborted": self.aborted,
            "wall_time_s": self.wall_time_s,
            "total_rejections": self.total_rejections,
            "total_chart2_steps": self.total_chart2_steps,
            "backend": self.backend,
            "estimates": [{"ell": e.ell_hat, "rho": e.rho_hat, "Y": e.Y_hat,
                           "dispersion": list(e.dispersion)} for e in self.estimates],
            "reports": [r.to_dict() for r in self.reports],
        }


def simulate_ensemble(cfg: RunConfig):
    """All paths of an ensemble, with one independent stream per path index.

    Stream i is the base Philox stream jumped i times, so results depend only
    on (seed, path index), never on scheduling order.
    """
    mp, initial = build_initial(cfg)
    base = np.random.Philox(key=cfg.seed)
    records, aborted = [], []
    for i in range(cfg.n_paths):
        gen = np.random.Generator(base.jumped(i))
        try:
            rec = dif.simulate_path(initial, s_max=cfg.s_max, ds=cfg.ds, seed=gen,
                                    mp=mp, stride=cfg.stride, backend=cfg.backend or None)
        except dif.PathAborted as exc:
            aborted.append({"path_index": i, "reason": str(exc)})
            continue
        records.append(rec)
    return mp, initial, records, aborted


def run_ensemble(cfg: RunConfig) -> tuple[int, dict]:
    """Ensemble statistics: growth, drift, boundary law, optional concentration."""
    if cfg.n_paths < 2:
        raise ConfigError(f"ensemble needs n_paths >= 2, got {cfg.n_paths}")
    t_begin = time.perf_counter()
    mp, initial, records, aborted = simulate_ensemble(cfg)
    wall = time.perf_counter() - t_begin
    ts = cfg.tol_scale
    wf = cfg.window_fraction

    abort_frac = len(aborted) / cfg.n_paths
    checks = [_report(
        "abort_fraction",
        f"at most a fraction {cfg.abort_fraction} of paths may abort",
        abort_frac, cfg.abort_fraction,
        details={"n_aborted": len(aborted)})]
    estimates = []
    if len(records) >= 2:
        estimates = [asy.estimate_boundary(r, wf) for r in records]
        checks.append(asy.ensemble_growth_test(records, mp, wf))
        checks.append(asy.lambda_drift_test(records, mp))
        cyl_meds = [abs(asy.cylinder_diagnostic(r, e, mp, wf)[1])
                    for r, e in zip(records, estimates)]
        if mp.sigma > 0.0:
            checks.append(_report(
                "cylinder_residual",
                "the per-path distance to the estimated ray cylinder is small",
                float(np.median(cyl_meds)), 0.05 * ts))
        extreme = float(np.mean([abs(e.ell_hat) >= 1.0 for e in estimates]))
        checks.append(_report(
            "ray_slope_bounded", "no path reaches |ell| = 1",
            extreme, 0.0, passed=extreme == 0.0))
        if cfg.concentration:
            checks.append(asy.concentration_report(
                estimates, (cfg.ell0, cfg.rho0, cfg.Y0), radius=cfg.concentration_radius))

    out = _ensure_dir(resolve_out_dir(cfg.out_dir))
    law = None
    if len(estimates) >= 100:
        law = asy.ensemble_boundary_law(estimates)
        for name, (counts, edges) in law.marginals.items():
            _write_csv(out / f"ensemble_hist_{name}.csv",
                       {"bin_lo": edges[:-1], "bin_hi": edges[1:], "count": counts})
        _write_csv(out / "ensemble_estimates.csv",
                   {"ell": law.estimates[:, 0], "rho": law.estimates[:, 1],
                    "Y": law.estimates[:, 2]})

    summary = EnsembleSummary(
        estimates=estimates,
        reports=checks,
        n_paths_configured=cfg.n_paths,
        n_paths_completed=len(records),
        aborted=aborted,
        wall_time_s=wall,
        total_rejections=sum(r.n_rejections for r in records),
        total_chart2_steps=sum(r.n_chart2_steps for r in records),
        backend=records[0].backend if records else "none",
    )
    extra: dict = {"summary": summary.to_dict()}
    if law is not None:
        extra["boundary_law"] = {
            "extreme_ell_fraction": law.extreme_ell_fraction,
            "largest_atom_mass": law.largest_atom_mass,
            "n_bins": law.n_bins,
        }
        _plot_ensemble(out / "ensemble_boundary.svg", law)
    payload = _payload(cfg, checks, **extra)
    _write_json(out / "ensemble.json", payload)
    return (0 if payload["all_passed"] else 1), payload


# ---------------------------------------------------------------------------
# scenario: demo-transitivity
# ---------------------------------------------------------------------------


def _e0_arcs(dt: float, dz: float):
    """Arc descriptors moving (t, z) by (dt, dz) at fixed (x, y).

    Geodesics with xdot = ydot = 0 run along straight (t, z) lines with
    tdot = eps sqrt(1 + zdot^2), eps = +-1.  A single arc reaches |dt| > |dz|;
    otherwise two arcs of opposite time orientation do it (the pieces are
    timelike geodesics, no orientation is required of the chain).
    """
    tiny = 1e-15 * (1.0 + abs(dt) + abs(dz))
    if abs(dt) <= tiny and abs(dz) <= tiny:
        return []
    if abs(dt) > abs(dz):
        s1 = math.sqrt(dt * dt - dz * dz)
        zdot = dz / s1
        eps = 1.0 if dt > 0 else -1.0
        return [{"tdot": eps * math.sqrt(1.0 + zdot**2), "zdot": zdot, "s_length": s1}]
    zdot = 1.0 if dz >= 0 else -1.0
    root2 = math.sqrt(2.0)
    s1 = 0.5 * (abs(dz) + dt / root2)
    s2 = 0.5 * (abs(dz) - dt / root2)
    return [
        {"tdot": root2, "zdot": zdot, "s_length": s1},
        {"tdot": -root2, "zdot": zdot, "s_length": s2},
    ]


def _xy_arc_state(start: np.ndarray, gamma0: float, a_arc: float, mp: ModelParams) -> geo.PhaseState:
    # planar arc family through the start point: c = 0, launch angle gamma0
    w = mp.omega
    A = math.sqrt(a_arc * a_arc - 1.0) / a_arc
    u0 = 2.0 - SQRT2 * A * math.sin(gamma0)
    E = math.exp(SQRT2 * w * start[1])
    vel = np.array([
        a_arc * (u0 - 1.0),
        a_arc * A * math.cos(gamma0),
        a_arc * (2.0 - u0) / E,
        0.0,
    ])
    return geo.PhaseState(np.asarray(start, dtype=float), vel)


def _solve_xy_arc(start: np.ndarray, x_target: float, y_target: float,
                  a_arc: float, mp: ModelParams):
    """Grid search plus Gauss-Newton for one planar arc hitting (x, y)."""
    k2 = (a_arc * a_arc - 1.0) / (2.0 * a_arc * a_arc)
    zeta = math.sqrt(1.0 - k2)
    period = math.pi / (abs(a_arc) * mp.omega * zeta)

    def endpoint(g0: float, s1: float):
        gp = geo.conserved_from_state(_xy_arc_state(start, g0, a_arc, mp), mp, kind="timelike")
        pts, _ = geo.geodesic_path(gp, np.array([s1]), mp)
        return pts[0], gp

    def miss(p: np.ndarray) -> float:
        return math.hypot(p[1] - x_target, p[2] - y_target)

    best = None
    for g0 in np.linspace(0.0, 2.0 * math.pi, 49)[:-1]:
        for s1 in np.linspace(period / 64.0, 1.25 * period, 48):
            p, _ = endpoint(g0, s1)
            d = miss(p)
            if best is None or d < best[0]:
                best = (d, g0, s1)

    _, g0, s1 = best
    h = 1e-7
    for _ in range(80):
        p, _ = endpoint(g0, s1)
        F = np.array([p[1] - x_target, p[2] - y_target])
        if np.max(np.abs(F)) < 1e-12:
            break
        pg, _ = endpoint(g0 + h, s1)
        ps, _ = endpoint(g0, s1 + h)
        J = np.column_stack([(np.array([pg[1], pg[2]]) - np.array([p[1], p[2]])) / h,
                             (np.array([ps[1], ps[2]]) - np.array([p[1], p[2]])) / h])
        try:
            delta = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            break
        scale = 1.0
        for _ in range(20):
            g_new, s_new = g0 + scale * delta[0], s1 + scale * delta[1]
            if s_new > 0:
                p_new, _ = endpoint(g_new, s_new)
                if miss(p_new) < miss(p):
                    g0, s1 = g_new, s_new
                    break
            scale *= 0.5
        else:
            break

    end, gp = endpoint(g0, s1)
    return end, gp, s1, miss(end)


def run_demo_transitivity(cfg: RunConfig) -> tuple[int, dict]:
    """Join two points by finitely many timelike geodesic arcs.

    Catalogue: one planar arc (found by grid search over launch angle and
    arc length) absorbs the (x, y) displacement, then one or two arcs with
    xdot = ydot = 0 absorb the remaining (t, z) displacement exactly.  This
    demonstrates reachability for moderate displacements; it is not a
    completeness construction.
    """
    mp = ModelParams(omega=cfg.omega, sigma=cfg.sigma)
    p_from = np.array([cfg.from_t, cfg.from_x, cfg.from_y, cfg.from_z])
    p_to = np.array([cfg.to_t, cfg.to_x, cfg.to_y, cfg.to_z])
    ts = cfg.tol_scale
    if not cfg.demo_a > 1.0:
        raise ConfigError(f"demo_a must exceed 1, got {cfg.demo_a}")

    arcs = []
    cur = p_from.astype(float).copy()
    xy_miss = 0.0
    scale = 1.0 + float(np.max(np.abs(p_to - p_from)))
    if math.hypot(p_to[1] - p_from[1], p_to[2] - p_from[2]) > 1e-15 * scale:
        end, gp, s1, xy_miss = _solve_xy_arc(cur, p_to[1], p_to[2], cfg.demo_a, mp)
        arcs.append({
            "kind": "xy",
            "a": gp.a, "b": gp.b, "c": gp.c, "Y": gp.Y, "s_length": s1,
            "start": cur.tolist(), "end": end.tolist(),
        })
        cur = end.copy()

    for spec in _e0_arcs(p_to[0] - cur[0], p_to[3] - cur[3]):
        e0_start = cur.copy()
        cur = cur + np.array([spec["tdot"] * spec["s_length"], 0.0, 0.0,
                              spec["zdot"] * spec["s_length"]])
        E = math.exp(SQRT2 * mp.omega * e0_start[1])
        arcs.append({
            "kind": "tz",
            "a": spec["tdot"], "b": 2.0 * E * spec["tdot"], "c": spec["zdot"],
            "Y": float(e0_start[2]), "s_length": spec["s_length"],
            "start": e0_start.tolist(), "end": cur.tolist(),
        })

    err = float(np.max(np.abs(cur - p_to)))
    pure_tz = all(a["kind"] == "tz" for a in arcs)
    tol = (1e-9 if pure_tz else 1e-6) * ts
    checks = [_report(
        "endpoint_error",
        "a chain of timelike geodesic arcs reaches the target point",
        err, tol,
        details={"n_arcs": len(arcs), "xy_grid_miss": xy_miss})]

    out = _ensure_dir(resolve_out_dir(cfg.out_dir))
    payload = _payload(cfg, checks, arcs=arcs,
                       endpoint={"reached": cur.tolist(), "target": p_to.tolist(),
                                 "error": err})
    _write_json(out / "transitivity.json", payload)
    return (0 if payload["all_passed"] else 1), payload


# ---------------------------------------------------------------------------
# plots (conveniences only, never acceptance-bearing)
# ---------------------------------------------------------------------------


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _plot_projection(path: Path, u, v, u_name: str, v_name: str, u_ode=None, v_ode=None) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(u, v, lw=1.0, label="closed form")
    if u_ode is not None and len(u_ode):
        idx = np.linspace(0, len(u_ode) - 1, min(60, len(u_ode))).astype(int)
        ax.plot(np.asarray(u_ode)[idx], np.asarray(v_ode)[idx], "k.", ms=3, label="RK4")
    ax.set_xlabel(u_name)
    ax.set_ylabel(v_name)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _plot_diffusion(path: Path, rec: dif.PathRecord, cylinder_series: np.ndarray) -> None:
    plt = _pyplot()
    s = rec.s
    fig, axes = plt.subplots(5, 1, figsize=(6, 11), sharex=True)
    axes[0].plot(s, rec.ell_series, lw=0.8)
    axes[0].set_ylabel("zdot / a")
    axes[1].plot(s, rec.rho_series, lw=0.8)
    axes[1].set_ylabel("b / a")
    axes[2].plot(s, rec.Y, lw=0.8)
    axes[2].set_ylabel("Y_s")
    axes[3].plot(s, cylinder_series, lw=0.8)
    axes[3].set_ylabel("cylinder residual")
    axes[4].plot(s, np.log(np.abs(rec.a)), lw=0.8)
    axes[4].set_ylabel("log |a|")
    axes[4].set_xlabel("s")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _plot_ensemble(path: Path, law: asy.BoundaryLawSummary) -> None:
    plt = _pyplot()
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.2))
    for ax, name, col in zip(axes, ("ell", "rho", "Y"), range(3)):
        ax.hist(law.estimates[:, col], bins=law.n_bins)
        ax.set_xlabel(name)
    axes[0].set_ylabel("paths")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
