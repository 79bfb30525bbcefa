import dataclasses
import json

import numpy as np
import pytest

from contactmor.errors import ConfigError
from contactmor.fem import Tear
from contactmor.scenarios import (
    ReductionSpec,
    Sensor,
    bundled_scenarios,
    compare,
    emit_plot_data,
    load_scenario,
    parse_reduction,
    parse_scenario,
    rel_l2,
    run_scenario,
)

from helpers import SMALL



def csv_files(root):
    return sorted(p.relative_to(root) for p in root.rglob("*.csv"))


# ------------------------------------------------------------------ parsing


def test_bundled_scenarios_parse():
    names = bundled_scenarios()
    assert names == ["example1_cb.cfg", "example1_krylov.cfg", "example1_load2.cfg", "example2.cfg"]
    for name in names:
        load_scenario(name)


def test_example1_contents():
    s = load_scenario("example1_krylov")
    assert (s.mesh.nx, s.mesh.ny) == (40, 40)
    assert s.mesh.tears == (Tear((0.75, 1.0), (0.75, 0.725)),)
    assert s.sensors == (Sensor(0.75, 0.95, "plus"), Sensor(0.75, 0.8, "plus"))
    assert s.reduction == ReductionSpec("krylov", 15)
    assert s.variants == (ReductionSpec("krylov", 5), ReductionSpec("krylov", 10))
    assert s.contact_node == 6
    assert s.sim.h == 0.05 and s.sim.t_end == 20.0
    assert load_scenario("example1_cb").reduction == ReductionSpec("craig_bampton", 7)
    assert load_scenario("example1_load2").load.kind == "load2"


def test_defaults_and_overrides():
    s = parse_scenario("[mesh]\nnx = 4\nny = 4\n", overrides={"sim.h": "0.2", "reduction.method": "modal", "reduction.n_r": 3})
    assert s.sim.h == 0.2
    assert s.reduction == ReductionSpec("modal", 3)
    assert s.material.E == 1000.0 and s.load.amplitude == 1.5
    assert s.mesh.dirichlet_edges == ("left",)


def test_multiple_tears_and_edges():
    s = parse_scenario("[mesh]\nnx = 4\nny = 4\ndirichlet = left, bottom\ntears = 0.5 1 0.5 0.75 | 0.75 0.5 1 0.5\n")
    assert len(s.mesh.tears) == 2
    assert s.mesh.dirichlet_edges == ("left", "bottom")


@pytest.mark.parametrize(
    "text,line,fragment",
    [
        ("[mesh]\nnx = 4\nbogus = 1\n", 3, "unknown key"),
        ("[mesh]\nnx = 4\n\n[extra]\na = 1\n", None, "unknown section"),
        ("[material]\nrho = 1\nE = abc\n", 3, "e"),
        ("[load]\nposition = 1.0\n", 2, "expected 2 numbers"),
        ("[reduction]\nmethod = pod\n", 2, "unknown method"),
        ("[sensors]\na = 0.5 0.5 left\n", 2, "sensor side"),
        ("[mesh]\ntears = 0.5 1 0.5\n", 2, "expected 4 numbers"),
        ("[sensors]\na = 0.5\n", 2, "sensor needs"),
    ],
)
def test_config_errors(text, line, fragment):
    with pytest.raises(ConfigError) as err:
        parse_scenario(text)
    assert err.value.line == line
    assert fragment in str(err.value)
    if line is not None:
        assert f"line {line}" in str(err.value)


def test_config_error_for_missing_size():
    with pytest.raises(ConfigError, match="n_r must be set"):
        parse_scenario("[reduction]\nmethod = krylov\n")


def test_config_error_for_bad_material():
    with pytest.raises(ConfigError):
        parse_scenario("[material]\nnu = 0.7\n")


@pytest.mark.parametrize(
    "text,line",
    [("[mesh]\nnx = 4\nno equals sign here\n", 3), ("nx = 4\n", 1), ("[mesh]\nnx = 1\nnx = 2\n", 3)],
)
def test_syntax_error_reports_line(text, line):
    with pytest.raises(ConfigError) as err:
        parse_scenario(text)
    assert err.value.line == line


def test_missing_scenario_file():
    with pytest.raises(ConfigError, match="not found"):
        load_scenario("does_not_exist")


def test_parse_reduction():
    assert parse_reduction("craig_bampton:7") == ReductionSpec("craig_bampton", 7)
    assert ReductionSpec("craig_bampton", 7).label == "craig_bampton_nk7"
    assert ReductionSpec("krylov", 5).label == "krylov_nr5"
    with pytest.raises(ValueError):
        parse_reduction("pod:3")


def test_baseline_hash_tracks_fom_inputs_only():
    base = parse_scenario(SMALL)
    assert parse_scenario(SMALL, {"reduction.n_r": "9"}).baseline_hash() == base.baseline_hash()
    assert parse_scenario(SMALL, {"sim.h": "0.05"}).baseline_hash() != base.baseline_hash()
    assert parse_scenario(SMALL, {"load.amplitude": "2"}).baseline_hash() != base.baseline_hash()


# ------------------------------------------------------------------ running


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    return run_scenario(parse_scenario(SMALL), out_dir=out), out


def test_run_outputs(small_run):
    result, out = small_run
    assert [r.label for r in result.reports] == ["krylov_nr6", "krylov_nr3", "craig_bampton_nk2"]
    assert result.report.n_r == 6
    assert result.reports[2].n_r == 16 + 2
    files = {str(p) for p in csv_files(out)}
    assert {"trajectory.csv", "fom_trajectory.csv", "report.csv", "variants/krylov_nr3.csv"} <= files
    assert "plots/sensor1_krylov_nr6.csv" in files and "plots/lambda_node2_craig_bampton_nk2.csv" in files
    meta = json.loads((out / "meta.json").read_text())
    assert meta["n_free_dofs"] == result.system.n_free and meta["n_constraints"] == 4
    assert meta["baseline_hash"] == result.scenario.baseline_hash()
    assert {"assembly", "fom_offline", "fom_online", "krylov_nr6_offline", "krylov_nr6_online"} <= set(meta["timings_s"])


def test_report_csv(small_run):
    _, out = small_run
    lines = (out / "report.csv").read_text().splitlines()
    header = lines[0].split(",")
    assert header[:3] == ["label", "method", "n_r"]
    assert "err_disp" in header and "err_lambda_4" in header and header[-1] == "max_penetration"
    assert len(lines) == 4


def test_run_without_reduction(tmp_path):
    result = run_scenario(parse_scenario(SMALL, {"reduction.method": "none", "reduction.variants": ""}), out_dir=tmp_path)
    assert result.reports == [] and result.fom is None
    lines = (tmp_path / "report.csv").read_text().splitlines()
    assert lines[0] == "label,method,n_r,max_penetration"
    assert lines[1].startswith("fom,none,0,")
    assert not (tmp_path / "fom_trajectory.csv").exists()


def test_run_is_deterministic(tmp_path, small_run):
    _, first = small_run
    run_scenario(parse_scenario(SMALL), out_dir=tmp_path)
    assert csv_files(tmp_path) == csv_files(first)
    for rel in csv_files(first):
        assert (tmp_path / rel).read_bytes() == (first / rel).read_bytes(), rel


def test_baseline_cache(tmp_path, small_run):
    _, reference = small_run
    cache = tmp_path / "cache"
    a = run_scenario(parse_scenario(SMALL), out_dir=tmp_path / "a", cache_dir=cache)
    b = run_scenario(parse_scenario(SMALL), out_dir=tmp_path / "b", cache_dir=cache)
    assert not a.cache_hit and b.cache_hit
    assert len(list(cache.glob("fom_*.npz"))) == 1
    for rel in csv_files(reference):
        assert (tmp_path / "b" / rel).read_bytes() == (reference / rel).read_bytes(), rel
    # a changed FOM input misses the cache
    c = run_scenario(parse_scenario(SMALL, {"load.amplitude": "1.0"}), cache_dir=cache)
    assert not c.cache_hit
    assert len(list(cache.glob("fom_*.npz"))) == 2


def test_contact_node_out_of_range():
    with pytest.raises(ConfigError, match="contact_node"):
        run_scenario(parse_scenario(SMALL, {"scenario.contact_node": "9"}))


def test_sensor_off_grid():
    with pytest.raises(ValueError):
        run_scenario(parse_scenario(SMALL, {"sensors.s3": "0.3 0.3 plus"}))


# ------------------------------------------------------------------ comparison


def test_rel_l2():
    assert rel_l2([1.0, 1.0], [1.0, 1.0]) == 0.0
    assert rel_l2([2.0, 0.0], [1.0, 0.0]) == 1.0
    assert rel_l2([0.5], [0.0]) == 0.5  # zero reference: absolute error


def test_compare_identical(small_run):
    result, _ = small_run
    rep = compare(result.fom, result.fom)
    assert rep.disp_error == 0.0
    assert not np.any(rep.sensor_errors) and not np.any(rep.lambda_errors)


def test_emit_plot_data_identical(small_run, tmp_path):
    fom = small_run[0].fom
    paths = emit_plot_data(fom, fom, [0, 1], tmp_path, label="same", contact_node=1)
    assert [p.name for p in paths] == ["sensor1_same.csv", "sensor2_same.csv", "lambda_node1_same.csv"]
    data = np.loadtxt(paths[0], delimiter=",", skiprows=1)
    np.testing.assert_array_equal(data[:, 3], 0.0)
    np.testing.assert_array_equal(data[:, 6], 0.0)
    lam = np.loadtxt(paths[2], delimiter=",", skiprows=1)
    np.testing.assert_array_equal(lam[:, 1], lam[:, 2])


def test_emit_plot_data_errors(small_run, tmp_path):
    result, _ = small_run
    with pytest.raises(ValueError, match="no sensors"):
        emit_plot_data(result.fom, result.trajectory, [], tmp_path)
    short = load_like(result.fom, 10)
    with pytest.raises(ValueError, match="time axes"):
        emit_plot_data(result.fom, short, [0], tmp_path)
    with pytest.raises(ValueError, match="time axes"):
        compare(result.fom, short)


def load_like(traj, n):
    from contactmor.solvers import Trajectory

    return Trajectory(traj.times[:n], traj.sensor_disp[:n], traj.lam[:n], traj.gap[:n], traj.energy[:n])


def test_report_without_sensors(tmp_path):
    scenario = dataclasses.replace(parse_scenario(SMALL, {"reduction.variants": "", "sim.t_end": "2"}), sensors=())
    result = run_scenario(scenario, out_dir=tmp_path)
    rep = result.report
    assert rep.disp_error is None and rep.sensor_errors is None
    assert rep.lambda_errors.shape == (4,)
    header = (tmp_path / "report.csv").read_text().splitlines()[0]
    assert header == "label,method,n_r,err_lambda_1,err_lambda_2,err_lambda_3,err_lambda_4,max_penetration"


@pytest.mark.slow
def test_example2_needs_twenty_vectors():
    result = run_scenario(load_scenario("example2"))
    err = {r.n_r: r.disp_error for r in result.reports}
    assert err[20] < err[10]
    assert result.system.m == 12
