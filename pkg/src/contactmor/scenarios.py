"""Scenario files, FOM/ROM runs and comparison reports.

A scenario file is INI-style text with explicit keys; see
``data/example1_krylov.cfg`` for a commented example. Running a scenario
produces a flat run directory::

    trajectory.csv          requested solver (ROM if a reduction is set)
    fom_trajectory.csv      full-order baseline, when a reduction is set
    variants/<label>.csv    extra reduced runs listed under ``variants``
    report.csv              one comparison row per reduced run
    plots/*.csv             FOM-vs-ROM overlays per sensor, multiplier overlay
    meta.json               scenario hash, versions, timings
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import math
import platform
import re
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .errors import ConfigError
from .fem import LoadSpec, Material, MeshSpec, Tear, assemble, build_mesh
from .mor import CRAIG_BAMPTON, KRYLOV, MODAL, craig_bampton_basis, krylov_basis, modal_basis, reduce, simulate_rom
from .solvers import SimParams, Trajectory, simulate

METHODS = ("none", KRYLOV, MODAL, CRAIG_BAMPTON)


@dataclass(frozen=True)
class Sensor:
    x: float
    y: float
    side: str = "minus"


@dataclass(frozen=True)
class ReductionSpec:
    method: str = "none"
    size: int = 0  # n_r for krylov/modal, n_k for craig_bampton

    @property
    def label(self):
        if self.method == "none":
            return "fom"
        tag = "nk" if self.method == CRAIG_BAMPTON else "nr"
        return f"{self.method}_{tag}{self.size}"


@dataclass
class Scenario:
    mesh: MeshSpec
    material: Material = field(default_factory=Material)
    load: LoadSpec = field(default_factory=LoadSpec)
    sim: SimParams = field(default_factory=SimParams)
    sensors: tuple[Sensor, ...] = ()
    reduction: ReductionSpec = field(default_factory=ReductionSpec)
    variants: tuple[ReductionSpec, ...] = ()
    contact_node: int = 1  # 1-based contact pair shown in the multiplier overlay
    name: str = "scenario"

    def baseline_hash(self):
        """Digest of everything the FOM baseline depends on."""
        payload = {
            "mesh": dataclasses.asdict(self.mesh),
            "material": dataclasses.asdict(self.material),
            "load": dataclasses.asdict(self.load),
            "sim": {"h": self.sim.h, "t0": self.sim.t0, "t_end": self.sim.t_end},
            "sensors": [dataclasses.asdict(s) for s in self.sensors],
            "version": __version__,
        }
        blob = json.dumps(payload, sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------- parsing


def _floats(text, n=None, section=None, key=None, line=None):
    try:
        vals = [float(v) for v in re.split(r"[\s,]+", text.strip()) if v]
    except ValueError:
        raise ConfigError(f"expected numbers, got {text!r}", section, key, line) from None
    if n is not None and len(vals) != n:
        raise ConfigError(f"expected {n} numbers, got {len(vals)}", section, key, line)
    return vals


def _line_of(text, section, key):
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
        elif current == section and re.match(rf"{re.escape(key)}\s*[=:]", s, re.IGNORECASE):
            return lineno
    return None


def parse_reduction(text):
    """``"krylov:15"`` -> ReductionSpec."""
    method, _, size = text.strip().partition(":")
    method = method.strip()
    if method not in METHODS:
        raise ValueError(f"unknown reduction method {method!r}")
    return ReductionSpec(method, int(size) if size else 0)


_KNOWN = {
    "scenario": {"name", "contact_node"},
    "mesh": {"nx", "ny", "domain", "dirichlet", "tears"},
    "material": {"rho", "e", "nu", "thickness"},
    "load": {"kind", "position", "side", "direction", "amplitude", "omega", "body_force"},
    "sim": {"h", "t0", "t_end"},
    "sensors": None,  # free-form keys
    "reduction": {"method", "n_r", "n_k", "variants"},
}


def parse_scenario(text, overrides=None, name="scenario") -> Scenario:
    """Parse scenario text. ``overrides`` maps ``"section.key"`` to a string value."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of any [section]", line=exc.lineno) from None
    except configparser.ParsingError as exc:
        raise ConfigError("expected 'key = value' or a [section] header", line=exc.errors[0][0]) from None
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], line=getattr(exc, "lineno", None)) from None
    for dotted, value in (overrides or {}).items():
        sec, _, key = dotted.partition(".")
        if not key:
            raise ConfigError(f"override {dotted!r} must look like section.key")
        if not cp.has_section(sec):
            cp.add_section(sec)
        cp.set(sec, key, str(value))

    for sec in cp.sections():
        if sec not in _KNOWN:
            raise ConfigError(f"unknown section [{sec}]", sec, line=_line_of(text, sec, ""))
        allowed = _KNOWN[sec]
        if allowed is None:
            continue
        for key in cp[sec]:
            if key not in allowed:
                raise ConfigError("unknown key", sec, key, _line_of(text, sec, key))

    def get(sec, key, conv, default):
        if not cp.has_option(sec, key):
            return default
        raw = cp.get(sec, key)
        try:
            return conv(raw)
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc), sec, key, _line_of(text, sec, key)) from None

    def vec(sec, key, n):
        return lambda raw: tuple(_floats(raw, n, sec, key, _line_of(text, sec, key)))

    def tears(raw):
        out = []
        for chunk in raw.split("|"):
            if chunk.strip():
                x0, y0, x1, y1 = _floats(chunk, 4, "mesh", "tears", _line_of(text, "mesh", "tears"))
                out.append(Tear((x0, y0), (x1, y1)))
        return tuple(out)

    def edges(raw):
        return tuple(e for e in re.split(r"[\s,]+", raw.strip()) if e)

    try:
        mesh = MeshSpec(
            nx=get("mesh", "nx", int, 40),
            ny=get("mesh", "ny", int, 40),
            domain=get("mesh", "domain", vec("mesh", "domain", 4), (0.0, 1.0, 0.0, 1.0)),
            tears=get("mesh", "tears", tears, ()),
            dirichlet_edges=get("mesh", "dirichlet", edges, ("left",)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), "mesh") from None

    def build(sec, factory, **kwargs):
        try:
            return factory(**kwargs)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc), sec) from None

    material = build(
        "material",
        Material,
        rho=get("material", "rho", float, 1.0),
        E=get("material", "e", float, 1000.0),
        nu=get("material", "nu", float, 0.3),
        thickness=get("material", "thickness", float, 1.0),
    )
    load = build(
        "load",
        LoadSpec,
        kind=get("load", "kind", str.strip, "load1"),
        position=get("load", "position", vec("load", "position", 2), (1.0, 0.875)),
        side=get("load", "side", str.strip, "minus"),
        direction=get("load", "direction", vec("load", "direction", 2), None),
        amplitude=get("load", "amplitude", float, 1.5),
        omega=get("load", "omega", float, 0.1 * math.pi),
        body_force=get("load", "body_force", vec("load", "body_force", 2), (0.0, 0.0)),
    )
    sim = build(
        "sim",
        SimParams,
        h=get("sim", "h", float, 0.05),
        t0=get("sim", "t0", float, 0.0),
        t_end=get("sim", "t_end", float, 20.0),
    )

    sensors = []
    if cp.has_section("sensors"):
        for key in cp["sensors"]:
            raw = cp.get("sensors", key).split()
            line = _line_of(text, "sensors", key)
            if len(raw) not in (2, 3):
                raise ConfigError("sensor needs 'x y [minus|plus]'", "sensors", key, line)
            x, y = _floats(" ".join(raw[:2]), 2, "sensors", key, line)
            side = raw[2] if len(raw) == 3 else "minus"
            if side not in ("minus", "plus"):
                raise ConfigError(f"sensor side must be minus or plus, got {side!r}", "sensors", key, line)
            sensors.append(Sensor(x, y, side))

    method = get("reduction", "method", str.strip, "none")
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}", "reduction", "method", _line_of(text, "reduction", "method"))
    size_key = "n_k" if method == CRAIG_BAMPTON else "n_r"
    size = get("reduction", size_key, int, 0)
    if method != "none" and size < (0 if method == CRAIG_BAMPTON else 1):
        raise ConfigError(f"{size_key} must be set for method {method}", "reduction", size_key)
    variants = get(
        "reduction",
        "variants",
        lambda raw: tuple(parse_reduction(v) for v in raw.split(",") if v.strip()),
        (),
    )

    return Scenario(
        mesh=mesh,
        material=material,
        load=load,
        sim=sim,
        sensors=tuple(sensors),
        reduction=ReductionSpec(method, size if method != "none" else 0),
        variants=variants,
        contact_node=get("scenario", "contact_node", int, 1),
        name=get("scenario", "name", str.strip, name),
    )


def bundled_scenarios():
    return sorted(p.name for p in resources.files("contactmor.data").iterdir() if p.name.endswith(".cfg"))


def load_scenario(path, overrides=None) -> Scenario:
    """Read a scenario from ``path``; bare names resolve to bundled files."""
    p = Path(path)
    if p.exists():
        text = p.read_text()
    else:
        name = p.name if p.name.endswith(".cfg") else p.name + ".cfg"
        res = resources.files("contactmor.data") / name
        if not res.is_file():
            raise ConfigError(f"scenario file {path} not found")
        text = res.read_text()
    return parse_scenario(text, overrides, name=p.stem)


# ----------------------------------------------------------------- running


def rel_l2(approx, ref):
    """Relative L2 error; falls back to the absolute error for a zero reference."""
    approx = np.asarray(approx, dtype=float)
    ref = np.asarray(ref, dtype=float)
    den = np.linalg.norm(ref)
    num = np.linalg.norm(approx - ref)
    return float(num / den) if den > 0 else float(num)


@dataclass
class ComparisonReport:
    label: str
    method: str
    n_r: int
    sensor_errors: np.ndarray | None  # (n_sensors, 2) relative L2, x and y
    disp_error: float | None  # all sensors and components together
    lambda_errors: np.ndarray | None  # per contact point
    max_penetration: float
    offline_time: float = 0.0
    online_time: float = 0.0

    def row(self):
        out = {"label": self.label, "method": self.method, "n_r": self.n_r}
        if self.sensor_errors is not None:
            for k, (ex, ey) in enumerate(self.sensor_errors):
                out[f"err_s{k + 1}_ux"] = ex
                out[f"err_s{k + 1}_uy"] = ey
            out["err_disp"] = self.disp_error
        if self.lambda_errors is not None:
            for i, e in enumerate(self.lambda_errors):
                out[f"err_lambda_{i + 1}"] = e
        out["max_penetration"] = self.max_penetration
        return out


def compare(fom: Trajectory, rom: Trajectory, label="rom", method="", n_r=0) -> ComparisonReport:
    if fom.times.shape != rom.times.shape or not np.array_equal(fom.times, rom.times):
        raise ValueError("trajectories have different time axes")
    ns = fom.sensor_disp.shape[1]
    sens = disp = None  # no sensors, nothing to compare
    if ns:
        sens = np.array(
            [[rel_l2(rom.sensor_disp[:, k, a], fom.sensor_disp[:, k, a]) for a in (0, 1)] for k in range(ns)]
        )
        disp = rel_l2(rom.sensor_disp, fom.sensor_disp)
    lam = np.array([rel_l2(rom.lam[:, i], fom.lam[:, i]) for i in range(fom.lam.shape[1])])
    return ComparisonReport(
        label=label,
        method=method,
        n_r=n_r,
        sensor_errors=sens,
        disp_error=disp,
        lambda_errors=lam,
        max_penetration=rom.max_penetration,
    )


def build_basis(sys, spec: ReductionSpec):
    if spec.method == KRYLOV:
        return krylov_basis(sys, spec.size)
    if spec.method == MODAL:
        return modal_basis(sys, spec.size)
    if spec.method == CRAIG_BAMPTON:
        return craig_bampton_basis(sys, spec.size)
    raise ValueError(f"no basis for method {spec.method!r}")


@dataclass
class RunResult:
    scenario: Scenario
    system: object
    trajectory: Trajectory
    fom: Trajectory | None
    reports: list[ComparisonReport]
    variants: dict[str, Trajectory]
    timings: dict[str, float]
    cache_hit: bool = False

    @property
    def report(self):
        return self.reports[0] if self.reports else None


def _save_npz(path, traj: Trajectory):
    np.savez(
        path,
        times=traj.times,
        sensor_disp=traj.sensor_disp,
        lam=traj.lam,
        gap=traj.gap,
        energy=traj.energy,
        sensors=np.asarray(traj.sensors, dtype=np.int64),
    )


def _load_npz(path) -> Trajectory:
    with np.load(path) as z:
        return Trajectory(
            z["times"], z["sensor_disp"], z["lam"], z["gap"], z["energy"],
            tuple(int(s) for s in z["sensors"]),
        )


def run_scenario(s: Scenario, out_dir=None, cache_dir=None) -> RunResult:
    """Run the FOM and any requested reductions; optionally write a run directory.

    With ``cache_dir`` set, the FOM baseline is stored there under the
    scenario's baseline hash and reused on later runs.
    """
    timings = {}
    t = time.perf_counter()
    mesh = build_mesh(s.mesh)
    sys = assemble(mesh, s.material, s.load)
    sensors = [mesh.nearest_node(x.x, x.y, x.side) for x in s.sensors]
    if not 1 <= s.contact_node <= max(sys.m, 1):
        raise ConfigError(f"contact_node {s.contact_node} out of range 1..{sys.m}", "scenario", "contact_node")
    timings["assembly"] = time.perf_counter() - t

    fom = None
    cache_hit = False
    cache_file = None
    if cache_dir is not None:
        cache_file = Path(cache_dir) / f"fom_{s.baseline_hash()}.npz"
        if cache_file.exists():
            fom = _load_npz(cache_file)
            cache_hit = True
    if fom is None:
        t = time.perf_counter()
        sys.step_factor(s.sim.h)
        timings["fom_offline"] = time.perf_counter() - t
        t = time.perf_counter()
        fom = simulate(sys, s.sim, sensors)
        timings["fom_online"] = time.perf_counter() - t
        if cache_file is not None:
            cache_file.parent.mkdir(parents=True, exist_ok=True)
            _save_npz(cache_file, fom)

    reports = []
    runs = {}
    specs = [] if s.reduction.method == "none" else [s.reduction]
    specs += [v for v in s.variants if v.method != "none" and v != s.reduction]
    for spec in specs:
        t = time.perf_counter()
        red = reduce(sys, build_basis(sys, spec))
        red.operator(s.sim.h)
        offline = time.perf_counter() - t
        t = time.perf_counter()
        traj = simulate_rom(red, s.sim, sensors)
        online = time.perf_counter() - t
        rep = compare(fom, traj, spec.label, spec.method, red.n_r)
        rep.offline_time, rep.online_time = offline, online
        timings[f"{spec.label}_offline"] = offline
        timings[f"{spec.label}_online"] = online
        reports.append(rep)
        runs[spec.label] = traj

    main = runs[specs[0].label] if specs else fom
    result = RunResult(s, sys, main, fom if specs else None, reports, runs, timings, cache_hit)
    if out_dir is not None:
        write_run(result, out_dir)
    return result


def write_report_csv(reports, path, fom: Trajectory | None = None):
    rows = [r.row() for r in reports]
    if not rows and fom is not None:
        rows = [{"label": "fom", "method": "none", "n_r": 0, "max_penetration": fom.max_penetration}]
    keys = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with open(path, "w") as fh:
        fh.write(",".join(keys) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(r.get(k, "")) for k in keys) + "\n")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def emit_plot_data(traj_fom: Trajectory, traj_rom: Trajectory, sensors, out_dir, label="rom", contact_node=None):
    """Write FOM/ROM overlay CSVs for the given sensor indices (0-based).

    ``contact_node`` (1-based) adds a multiplier and gap overlay.
    Returns the written paths.
    """
    sensors = list(np.atleast_1d(sensors)) if sensors is not None else []
    if not sensors:
        raise ValueError("no sensors selected for plot data")
    if traj_fom.times.shape != traj_rom.times.shape or not np.array_equal(traj_fom.times, traj_rom.times):
        raise ValueError("trajectories have different time axes")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for k in sensors:
        k = int(k)
        a = traj_fom.sensor_disp[:, k]
        b = traj_rom.sensor_disp[:, k]
        table = np.column_stack([traj_fom.times, a[:, 0], b[:, 0], b[:, 0] - a[:, 0], a[:, 1], b[:, 1], b[:, 1] - a[:, 1]])
        path = out / f"sensor{k + 1}_{label}.csv"
        _write_table(path, ["t", "fom_ux", "rom_ux", "diff_ux", "fom_uy", "rom_uy", "diff_uy"], table)
        written.append(path)
    if contact_node is not None:
        i = int(contact_node) - 1
        table = np.column_stack([traj_fom.times, traj_fom.lam[:, i], traj_rom.lam[:, i], traj_fom.gap[:, i], traj_rom.gap[:, i]])
        path = out / f"lambda_node{contact_node}_{label}.csv"
        _write_table(path, ["t", "fom_lambda", "rom_lambda", "fom_gap", "rom_gap"], table)
        written.append(path)
    return written


def _write_table(path, header, table):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in table:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def write_run(result: RunResult, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    s = result.scenario
    result.trajectory.to_csv(out / "trajectory.csv")
    if result.fom is not None:
        result.fom.to_csv(out / "fom_trajectory.csv")
    if len(result.variants) > 1:
        (out / "variants").mkdir(exist_ok=True)
        for label, traj in result.variants.items():
            traj.to_csv(out / "variants" / f"{label}.csv")
    write_report_csv(result.reports, out / "report.csv", fom=result.trajectory)
    if result.fom is not None and s.sensors:
        for label, traj in result.variants.items():
            emit_plot_data(result.fom, traj, range(len(s.sensors)), out / "plots", label, s.contact_node if result.system.m else None)
    meta = {
        "scenario": s.name,
        "baseline_hash": s.baseline_hash(),
        "fom_cache_hit": result.cache_hit,
        "n_raw_dofs": result.system.n_raw,
        "n_free_dofs": result.system.n_free,
        "n_constraints": result.system.m,
        "steps": int(result.trajectory.times.size),
        "timings_s": result.timings,
        "versions": {
            "contactmor": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return out
