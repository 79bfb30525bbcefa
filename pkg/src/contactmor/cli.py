"""Command-line entry point: ``contactmor {run,compare,export-matrices,plot-data,list}``.

Exit codes: 0 success, 2 configuration error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import scipy.io

from .errors import ConfigError, ContactMorError, InvalidTear
from .fem import assemble, build_mesh, write_mesh
from .mor import reduce, write_basis
from .scenarios import (
    bundled_scenarios,
    build_basis,
    compare,
    emit_plot_data,
    load_scenario,
    run_scenario,
    write_report_csv,
)
from .solvers import Trajectory

log = logging.getLogger("contactmor")

EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _overrides(args):
    out = {}
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        out[key.strip()] = value.strip()
    if getattr(args, "h", None) is not None:
        out["sim.h"] = args.h
    if getattr(args, "t_end", None) is not None:
        out["sim.t_end"] = args.t_end
    if getattr(args, "method", None) is not None:
        out["reduction.method"] = args.method
    if getattr(args, "nr", None) is not None:
        method = out.get("reduction.method")
        if method is None:
            method = load_scenario(args.scenario, out).reduction.method
        out["reduction.n_k" if method == "craig_bampton" else "reduction.n_r"] = args.nr
    return out


def _add_scenario_flags(p):
    p.add_argument("scenario", help="scenario file, or the name of a bundled scenario")
    p.add_argument("--nr", type=int, help="reduced dimension (n_k for craig_bampton)")
    p.add_argument("--h", type=float, help="time step")
    p.add_argument("--t-end", type=float, dest="t_end", help="end of the time horizon")
    p.add_argument("--method", choices=["none", "krylov", "modal", "craig_bampton"])
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override any scenario key")


def cmd_run(args):
    scenario = load_scenario(args.scenario, _overrides(args))
    cache = None if args.no_cache else args.cache_dir
    result = run_scenario(scenario, out_dir=args.out, cache_dir=cache)
    print(f"scenario {scenario.name}: {result.system.n_free} free DOFs, m={result.system.m}, "
          f"{len(result.trajectory)} steps -> {args.out}")
    if result.cache_hit:
        print("FOM baseline loaded from cache")
    for rep in result.reports:
        err = "n/a (no sensors)" if rep.disp_error is None else f"{rep.disp_error:.4e}"
        print(f"  {rep.label:<24} n_r={rep.n_r:<5} disp err={err}  max penetration={rep.max_penetration:.2e}")
    if not result.reports:
        print(f"  fom max penetration={result.trajectory.max_penetration:.2e}")
    return 0


def _trajectory_path(p):
    p = Path(p)
    return p / "trajectory.csv" if p.is_dir() else p


def cmd_compare(args):
    ref = Trajectory.from_csv(_trajectory_path(args.reference))
    other = Trajectory.from_csv(_trajectory_path(args.candidate))
    rep = compare(ref, other, label=Path(args.candidate).name)
    if args.out:
        write_report_csv([rep], args.out)
    if rep.disp_error is None:
        print("no sensor columns to compare")
    else:
        print(f"relative L2 displacement error: {rep.disp_error:.6e}")
        for k, (ex, ey) in enumerate(rep.sensor_errors):
            print(f"  sensor {k + 1}: ux {ex:.6e}  uy {ey:.6e}")
    print(f"max penetration (candidate): {rep.max_penetration:.3e}")
    return 0


def cmd_export(args):
    scenario = load_scenario(args.scenario, _overrides(args))
    try:
        mesh = build_mesh(scenario.mesh)
    except InvalidTear as exc:
        raise ConfigError(str(exc), "mesh", "tears") from None
    sys_ = assemble(mesh, scenario.material, scenario.load)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sys_.M.write_matrix_market(out / "M.mtx", comment="mass matrix, free DOFs")
    sys_.K.write_matrix_market(out / "K.mtx", comment="stiffness matrix, free DOFs")
    scipy.io.mmwrite(str(out / "C.mtx"), sys_.C.tocoo(), comment="constraint matrix")
    np.savetxt(out / "b.txt", sys_.b, fmt="%.17g")
    np.savetxt(out / "load_pattern.txt", sys_.load_pattern, fmt="%.17g")
    write_mesh(mesh, out / "mesh.txt")
    if scenario.reduction.method != "none":
        basis = build_basis(sys_, scenario.reduction)
        red = reduce(sys_, basis)
        write_basis(basis, out / "basis.txt")
        np.savetxt(out / "Mhat.txt", red.Mhat, fmt="%.17g")
        np.savetxt(out / "Khat.txt", red.Khat, fmt="%.17g")
        np.savetxt(out / "Chat.txt", red.Chat, fmt="%.17g")
    print(f"wrote matrices for {sys_.n_free} free DOFs ({sys_.n_raw} raw) to {out}")
    return 0


def cmd_plot_data(args):
    fom = Trajectory.from_csv(args.fom)
    rom = Trajectory.from_csv(args.rom)
    sensors = [s - 1 for s in args.sensor] if args.sensor else []
    paths = emit_plot_data(fom, rom, sensors, args.out, label=args.label, contact_node=args.contact_node)
    for p in paths:
        print(p)
    return 0


def cmd_list(args):
    for name in bundled_scenarios():
        print(name)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="contactmor", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario (FOM and requested reductions)")
    _add_scenario_flags(p)
    p.add_argument("--out", default="run", help="output directory")
    p.add_argument("--cache-dir", default=".contactmor-cache", help="FOM baseline cache directory")
    p.add_argument("--no-cache", action="store_true", help="always recompute the FOM baseline")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="compare two trajectories (run dirs or CSV files)")
    p.add_argument("reference")
    p.add_argument("candidate")
    p.add_argument("--out", help="write the comparison row to this CSV file")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("export-matrices", help="write M, K, C, b (and the basis) to disk")
    _add_scenario_flags(p)
    p.add_argument("--out", default="matrices")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("plot-data", help="FOM/ROM overlay CSVs from two trajectory files")
    p.add_argument("fom")
    p.add_argument("rom")
    p.add_argument("--sensor", type=int, action="append", help="1-based sensor index (repeatable)")
    p.add_argument("--contact-node", type=int, help="1-based contact pair for the multiplier overlay")
    p.add_argument("--label", default="rom")
    p.add_argument("--out", default="plots")
    p.set_defaults(func=cmd_plot_data)

    p = sub.add_parser("list", help="list bundled scenarios")
    p.set_defaults(func=cmd_list)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InvalidTear) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ContactMorError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        # bad sensor coordinates, mismatched trajectories, ...
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
