"""Command line interface.

Subcommands: verify-geometry, geodesic, diffuse, ensemble, demo-transitivity.
Each accepts --config FILE (flat TOML) plus flags that override file values.
Exit codes: 0 all checks passed, 1 a diagnostic failed, 2 invalid config.
"""

from __future__ import annotations

import argparse
import sys

from . import harness
from .harness import ConfigError, RunConfig

_DISPATCH = {
    "verify-geometry": harness.run_verify_geometry,
    "geodesic": harness.run_geodesic,
    "diffuse": harness.run_diffuse,
    "ensemble": harness.run_ensemble,
    "demo-transitivity": harness.run_demo_transitivity,
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", help="flat TOML config file")
    p.add_argument("--out", metavar="DIR",
                   help=f"output directory (overrides ${harness.OUT_DIR_ENV} and the config)")
    p.add_argument("--seed", type=int)
    p.add_argument("--omega", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--s-max", dest="s_max", type=float)
    p.add_argument("--ds", type=float)
    p.add_argument("--stride", type=int)
    p.add_argument("--backend", choices=["c", "python"])
    p.add_argument("--tol-scale", dest="tol_scale", type=float)
    p.add_argument("--window-fraction", dest="window_fraction", type=float)


def _add_initial(p: argparse.ArgumentParser) -> None:
    p.add_argument("--initial-kind", dest="initial_kind", choices=["target", "shell"])
    p.add_argument("--a0", type=float)
    p.add_argument("--ell0", type=float)
    p.add_argument("--rho0", type=float)
    p.add_argument("--Y0", type=float)
    p.add_argument("--gamma0", type=float)
    p.add_argument("--t0", type=float)
    p.add_argument("--x0", type=float)
    p.add_argument("--y0", type=float)
    p.add_argument("--z0", type=float)
    p.add_argument("--zdot0", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="godelsim",
        description="Geodesics and relativistic diffusion in a rotating universe",
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("verify-geometry", help="check all geometry identities at random points")
    _add_common(p)
    p.add_argument("--n-points", dest="n_points", type=int)

    p = sub.add_parser("geodesic", help="closed-form geodesic vs RK4 oracle, CSV and plots")
    _add_common(p)
    p.add_argument("--kind", dest="geo_kind", choices=["timelike", "lightlike"])
    p.add_argument("--geo-a", dest="geo_a", type=float)
    p.add_argument("--geo-b", dest="geo_b", type=float)
    p.add_argument("--geo-c", dest="geo_c", type=float)
    p.add_argument("--geo-Y", dest="geo_Y", type=float)
    p.add_argument("--ell0", type=float, help="ray slope (lightlike kind)")
    p.add_argument("--rho0", type=float, help="ray scale (lightlike kind)")
    p.add_argument("--Y0", type=float, help="ray centre (lightlike kind)")
    p.add_argument("--t0", type=float)
    p.add_argument("--z0", type=float)

    p = sub.add_parser("diffuse", help="simulate one diffusion path with diagnostics")
    _add_common(p)
    _add_initial(p)

    p = sub.add_parser("ensemble", help="simulate an ensemble and run the statistical tests")
    _add_common(p)
    _add_initial(p)
    p.add_argument("--paths", dest="n_paths", type=int)
    p.add_argument("--abort-fraction", dest="abort_fraction", type=float)
    p.add_argument("--concentration", dest="concentration",
                   action=argparse.BooleanOptionalAction, default=None,
                   help="assert concentration of the estimates near the initial target")
    p.add_argument("--concentration-radius", dest="concentration_radius", type=float)

    p = sub.add_parser("demo-transitivity",
                       help="join two points by a chain of timelike geodesic arcs")
    _add_common(p)
    for axis in ("t", "x", "y", "z"):
        p.add_argument(f"--from-{axis}", dest=f"from_{axis}", type=float)
        p.add_argument(f"--to-{axis}", dest=f"to_{axis}", type=float)
    p.add_argument("--demo-a", dest="demo_a", type=float)

    return parser


def _assemble(args: argparse.Namespace) -> RunConfig:
    mapping: dict = {}
    if args.config:
        mapping.update(RunConfig.from_file(args.config).to_dict())
    for key in vars(args):
        if key in ("command", "config", "out"):
            continue
        val = getattr(args, key)
        if val is not None and key in harness._SCHEMA:
            mapping[key] = val
    mapping["scenario"] = args.command
    mapping["out_dir"] = harness.resolve_out_dir(args.out, mapping.get("out_dir", ""))
    return RunConfig.from_mapping(mapping)


def _fmt(value, spec: str = ".6g") -> str:
    # non-finite floats arrive as repr strings from the JSON-safe payload
    if isinstance(value, (int, float)):
        return format(value, spec)
    return str(value)


def _print_summary(payload: dict) -> None:
    for check in payload.get("checks", []):
        status = "PASS" if check["passed"] else "FAIL"
        line = f"[{status}] {check['name']}: value={_fmt(check['value'])}"
        if check["expected"] not in (0, 0.0):
            line += f" expected={_fmt(check['expected'])}"
        line += f" tol={_fmt(check['tol'], '.3g')}"
        print(line)
    n_fail = sum(not c["passed"] for c in payload.get("checks", []))
    where = payload.get("config", {}).get("out_dir", "")
    if n_fail:
        print(f"{n_fail} check(s) failed; artifacts in {where}")
    else:
        print(f"all checks passed; artifacts in {where}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return 2
    try:
        cfg = _assemble(args)
        code, payload = _DISPATCH[cfg.scenario](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    _print_summary(payload)
    return code


if __name__ == "__main__":
    sys.exit(main())
