"""Config handling, scenario drivers, CLI exit codes and artifacts."""

import json

import numpy as np
import pytest

import godelsim.asymptotics as asym
import godelsim.cli as cli
import godelsim.diffusion as dif
import godelsim.harness as h
from godelsim.geometry import ModelParams


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def test_config_defaults():
    cfg = h.RunConfig.from_mapping({})
    assert cfg.scenario == "diffuse"
    assert cfg.omega == 1.0 and cfg.sigma == 1.0
    assert cfg.s_max == 10.0 and cfg.ds == 1e-3
    assert cfg.stride == 10 and cfg.n_paths == 200
    assert cfg.seed == 12345


def test_config_rejects_unknown_keys():
    with pytest.raises(h.ConfigError, match="unknown config keys"):
        h.RunConfig.from_mapping({"dz": 1.0})


@pytest.mark.parametrize(
    "mapping",
    [
        {"scenario": "warp"},
        {"ds": -1e-3},
        {"s_max": 0.0},
        {"stride": 2.5},
        {"omega": True},
        {"window_fraction": 1.5},
        {"backend": "fortran"},
        {"n_paths": 0},
        {"abort_fraction": 1.5},
        {"initial_kind": "random"},
    ],
    ids=lambda m: next(iter(m)),
)
def test_config_rejects_bad_values(mapping):
    with pytest.raises(h.ConfigError):
        h.RunConfig.from_mapping(mapping)


def test_config_toml_round_trip(tmp_path):
    cfg = h.RunConfig.from_mapping(
        {"scenario": "ensemble", "omega": 2.0, "n_paths": 50, "concentration": True,
         "out_dir": "somewhere"}
    )
    f = tmp_path / "run.toml"
    f.write_text(cfg.to_toml())
    back = h.RunConfig.from_file(f)
    assert back == cfg
    assert h.config_hash(back) == h.config_hash(cfg)


def test_config_hash_tracks_content():
    base = h.RunConfig.from_mapping({})
    assert h.config_hash(base) == h.config_hash(h.RunConfig.from_mapping({}))
    assert h.config_hash(base) != h.config_hash(base.replace(seed=1))
    assert len(h.config_hash(base)) == 12


def test_config_file_rejects_tables(tmp_path):
    f = tmp_path / "run.toml"
    f.write_text("[section]\nomega = 1.0\n")
    with pytest.raises(h.ConfigError, match="flat"):
        h.RunConfig.from_file(f)


def test_resolve_out_dir_precedence(monkeypatch):
    monkeypatch.delenv(h.OUT_DIR_ENV, raising=False)
    assert h.resolve_out_dir(None, "") == "godelsim-out"
    assert h.resolve_out_dir(None, "from_file") == "from_file"
    monkeypatch.setenv(h.OUT_DIR_ENV, "from_env")
    assert h.resolve_out_dir(None, "from_file") == "from_env"
    assert h.resolve_out_dir("from_flag", "from_file") == "from_flag"


# ---------------------------------------------------------------------------
# initial conditions
# ---------------------------------------------------------------------------


def test_boundary_target_initial_reproduces_target():
    mp = ModelParams(omega=1.0, sigma=0.0)
    target = (0.4, 1.8, -0.3)
    init = h.initial_from_boundary_target(*target, a=2.5, mp=mp)
    rec = dif.simulate_path(init, s_max=2.0, ds=1e-3, seed=1, mp=mp)
    est = asym.estimate_boundary(rec)
    assert est.ell_hat == pytest.approx(target[0], abs=1e-10)
    assert est.rho_hat == pytest.approx(target[1], rel=1e-10)
    assert est.Y_hat == pytest.approx(target[2], abs=1e-10)


def test_boundary_target_validation():
    mp = ModelParams()
    with pytest.raises(h.ConfigError, match="rho"):
        h.initial_from_boundary_target(0.0, -1.0, 0.0, a=2.0, mp=mp)
    with pytest.raises(h.ConfigError):
        h.initial_from_boundary_target(0.0, 1.0, 0.0, a=0.5, mp=mp)
    # a^2 (1 - ell^2) >= 1 must hold for the launch to sit on the shell
    with pytest.raises(h.ConfigError):
        h.initial_from_boundary_target(0.99, 1.0, 0.0, a=1.2, mp=mp)


def test_build_initial_shell_kind():
    cfg = h.RunConfig.from_mapping(
        {"initial_kind": "shell", "a0": 1.7, "zdot0": 0.5, "gamma0": 0.2,
         "x0": 0.3, "y0": -0.1, "t0": 2.0, "z0": 0.7}
    )
    mp, init = h.build_initial(cfg)
    assert isinstance(mp, ModelParams)
    assert init.a == 1.7 and init.zdot == 0.5
    assert init.x == 0.3 and init.t == 2.0 and init.z == 0.7
    assert abs(dif.shell_residual(init, mp)) < 1e-12


# ---------------------------------------------------------------------------
# ensemble mechanics
# ---------------------------------------------------------------------------


def ensemble_cfg(tmp_path, **over):
    mapping = {"scenario": "ensemble", "s_max": 3.0, "n_paths": 24,
               "out_dir": str(tmp_path)}
    mapping.update(over)
    return h.RunConfig.from_mapping(mapping)


def test_ensemble_paths_depend_on_seed_and_index_only(tmp_path):
    # growing the ensemble must not disturb the paths already in it
    _, _, few, aborted_few = h.simulate_ensemble(ensemble_cfg(tmp_path, n_paths=3))
    _, _, more, aborted_more = h.simulate_ensemble(ensemble_cfg(tmp_path, n_paths=5))
    assert len(few) == 3 and len(more) == 5
    assert aborted_few == [] and aborted_more == []
    for a, b in zip(few, more):
        assert np.array_equal(a.data, b.data)


def test_ensemble_summary_payload(tmp_path):
    code, payload = h.run_ensemble(ensemble_cfg(tmp_path))
    assert code == 0
    assert payload["all_passed"] is True
    assert payload["scenario"] == "ensemble"
    names = {c["name"] for c in payload["checks"]}
    assert {"abort_fraction", "ensemble_growth", "lambda_drift",
            "cylinder_residual", "ray_slope_bounded"} <= names
    data = json.loads((tmp_path / "ensemble.json").read_text())
    assert data["config_hash"] == payload["config_hash"]
    assert data["seed"] == 12345


def test_ensemble_boundary_artifacts_with_enough_paths(tmp_path):
    code, payload = h.run_ensemble(ensemble_cfg(tmp_path, n_paths=110))
    assert code == 0
    for name in ("ensemble_estimates.csv", "ensemble_hist_ell.csv",
                 "ensemble_hist_rho.csv", "ensemble_hist_Y.csv",
                 "ensemble_boundary.svg"):
        assert (tmp_path / name).exists(), name
    rows = np.loadtxt(tmp_path / "ensemble_estimates.csv", delimiter=",", skiprows=1)
    assert rows.shape == (110, 3)
    assert payload["boundary_law"]["extreme_ell_fraction"] == 0.0


def test_ensemble_needs_two_paths(tmp_path):
    with pytest.raises(h.ConfigError, match="paths"):
        h.run_ensemble(ensemble_cfg(tmp_path, n_paths=1))


# ---------------------------------------------------------------------------
# CLI end to end
# ---------------------------------------------------------------------------


def test_cli_without_subcommand_exits_2(capsys):
    assert cli.main([]) == 2
    assert "verify-geometry" in capsys.readouterr().out


def test_cli_missing_config_file(tmp_path):
    assert cli.main(["diffuse", "--config", str(tmp_path / "nope.toml")]) == 2


def test_cli_verify_geometry_passes(tmp_path, capsys):
    code = cli.main(["verify-geometry", "--out", str(tmp_path), "--n-points", "120"])
    out = capsys.readouterr().out
    assert code == 0
    assert "[PASS] metric_inverse" in out
    assert "all checks passed" in out
    payload = json.loads((tmp_path / "verify_geometry.json").read_text())
    assert payload["all_passed"] is True
    assert {"config_hash", "seed", "checks", "config"} <= set(payload)


def test_cli_verify_geometry_negative_control(tmp_path, capsys):
    # tol_scale 0 shrinks every tolerance to zero: roundoff must now fail
    code = cli.main(["verify-geometry", "--out", str(tmp_path),
                     "--n-points", "40", "--tol-scale", "0"])
    assert code == 1
    assert "[FAIL]" in capsys.readouterr().out


def test_cli_rejects_unknown_toml_key(tmp_path):
    f = tmp_path / "bad.toml"
    f.write_text('scenario = "diffuse"\nwarp_speed = 9\n')
    assert cli.main(["diffuse", "--config", str(f)]) == 2


def test_cli_geodesic_timelike(tmp_path, capsys):
    code = cli.main(["geodesic", "--out", str(tmp_path), "--s-max", "5"])
    assert code == 0
    out = capsys.readouterr().out
    assert "[PASS] closed_form_vs_rk4" in out
    header = (tmp_path / "geodesic.csv").read_text().splitlines()[0]
    assert header.startswith("s,t,x,y,z,")
    assert "dev_t" in header  # deviation columns against the RK4 oracle
    assert (tmp_path / "geodesic_xy.svg").exists()
    assert (tmp_path / "geodesic_tz.svg").exists()


def test_cli_geodesic_lightlike(tmp_path, capsys):
    code = cli.main(["geodesic", "--out", str(tmp_path), "--kind", "lightlike",
                     "--ell0", "0.5", "--s-max", "40"])
    assert code == 0
    assert "[PASS] ray_slope" in capsys.readouterr().out


def test_cli_geodesic_rejects_non_timelike_constants(tmp_path):
    code = cli.main(["geodesic", "--out", str(tmp_path),
                     "--geo-a", "1.0", "--geo-c", "0.9"])
    assert code == 2


def test_cli_diffuse_deterministic_artifacts(tmp_path, capsys):
    args = ["diffuse", "--s-max", "6", "--seed", "42"]
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert cli.main(args + ["--out", str(out_a)]) == 0
    assert cli.main(args + ["--out", str(out_b)]) == 0
    assert (out_a / "diffuse.csv").read_bytes() == (out_b / "diffuse.csv").read_bytes()
    payload = json.loads((out_a / "diffuse.json").read_text())
    assert payload["all_passed"] is True
    assert payload["backend"] in ("c", "python")
    assert (out_a / "diffuse_diagnostics.svg").exists()


def test_cli_diffuse_sigma_zero(tmp_path, capsys):
    code = cli.main(["diffuse", "--out", str(tmp_path), "--sigma", "0",
                     "--s-max", "2"])
    assert code == 0
    # without noise the cylinder residual must equal -1/(2 a0^2)
    payload = json.loads((tmp_path / "diffuse.json").read_text())
    cyl = next(c for c in payload["checks"] if c["name"] == "cylinder_residual")
    assert cyl["expected"] == pytest.approx(-1.0 / (2.0 * 2.0**2))


def test_cli_diffuse_negative_control(tmp_path):
    code = cli.main(["diffuse", "--out", str(tmp_path), "--s-max", "6",
                     "--seed", "42", "--tol-scale", "0"])
    assert code == 1


def test_cli_ensemble_runs_small(tmp_path, capsys):
    code = cli.main(["ensemble", "--out", str(tmp_path), "--paths", "24",
                     "--s-max", "3"])
    assert code == 0
    assert "all checks passed" in capsys.readouterr().out


def test_cli_out_dir_env(tmp_path, monkeypatch, capsys):
    target = tmp_path / "via_env"
    monkeypatch.setenv(h.OUT_DIR_ENV, str(target))
    assert cli.main(["verify-geometry", "--n-points", "40"]) == 0
    assert (target / "verify_geometry.json").exists()


def test_cli_out_flag_beats_env(tmp_path, monkeypatch):
    monkeypatch.setenv(h.OUT_DIR_ENV, str(tmp_path / "env"))
    flag_dir = tmp_path / "flag"
    assert cli.main(["verify-geometry", "--n-points", "40", "--out", str(flag_dir)]) == 0
    assert (flag_dir / "verify_geometry.json").exists()
    assert not (tmp_path / "env").exists()


@pytest.mark.parametrize(
    "to,arcs",
    [
        ((0.0, 0.0, 0.0, 0.0), []),
        ((3.0, 0.0, 0.0, 1.0), ["tz"]),
        ((0.5, 0.2, 0.3, -0.4), ["xy", "tz"]),
    ],
    ids=["same-point", "pure-tz", "generic"],
)
def test_cli_demo_transitivity(tmp_path, to, arcs):
    args = ["demo-transitivity", "--out", str(tmp_path)]
    for axis, val in zip(("t", "x", "y", "z"), to):
        args += [f"--to-{axis}", str(val)]
    assert cli.main(args) == 0
    payload = json.loads((tmp_path / "transitivity.json").read_text())
    assert [a["kind"] for a in payload["arcs"]] == arcs
    assert payload["all_passed"] is True


def test_cli_demo_transitivity_needs_superluminal_margin(tmp_path):
    code = cli.main(["demo-transitivity", "--out", str(tmp_path),
                     "--to-t", "1.0", "--demo-a", "0.9"])
    assert code == 2
