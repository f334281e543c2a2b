import json
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose

from chainqed import cli
from chainqed.dynamics import Trajectory
from chainqed.runner import (
    ConfigError,
    config_from_dict,
    draw_params,
    export_trajectory,
    import_trajectory,
    initial_mean_field,
    initial_state,
    load_config,
    run,
)

MINIMAL = """
task: propagate
space:
  n_sites: 1
params:
  omegas: [1.0]
integrate:
  t_end: 2.0
  n_out: 11
"""

COUPLED = """
task: propagate
seed: 7
space:
  n_sites: 2
  field_modes:
    - {cutoff: 4}
params:
  site_energies: [[-0.5, 0.5], [-0.45, 0.55]]
  exchange_j: 0.05
  field_modes:
    - {omega: 1.0, amplitude: 0.1, polarization_overlap: [1.0, 0.8]}
initial:
  sites:
    - {kind: angles, theta: 1.0}
    - {kind: ground}
  field_modes:
    - {kind: coherent, alpha: 0.5}
integrate:
  tol: 1.0e-10
  t_end: 4.0
  n_out: 21
output:
  formats: [csv, json]
"""


def write_config(tmp_path, text, name="config.yaml") -> Path:
    path = tmp_path / name
    path.write_text(text)
    return path


def test_minimal_config_valid(tmp_path):
    config = load_config(write_config(tmp_path, MINIMAL))
    assert config.task == "propagate"
    assert config.space_spec.n_sites == 1
    assert config.params.omegas == (1.0,)


def test_missing_file_reported():
    with pytest.raises(ConfigError, match="not found"):
        load_config("does_not_exist.yaml")


def test_mode_reference_beyond_declared_is_named():
    raw = {
        "space": {"n_sites": 1, "field_modes": [{"cutoff": 2}]},
        "params": {
            "omegas": [1.0],
            "field_modes": [{"omega": 1.0}, {"omega": 2.0}],
        },
    }
    with pytest.raises(ConfigError, match="space declares 1 field modes"):
        config_from_dict(raw)


def test_validation_errors_aggregated():
    raw = {
        "task": "nonsense",
        "space": {"n_sites": 0},
        "params": {"site_energies": [[0.5, -0.5]]},
        "integrate": {"tol": -1.0, "t_end": 0.0},
    }
    with pytest.raises(ConfigError) as err:
        config_from_dict(raw)
    text = str(err.value)
    assert "task" in text
    assert "n_sites" in text
    assert "tol" in text
    assert "t_end" in text
    assert len(err.value.problems) >= 4


def test_drive_site_reference_checked():
    raw = {
        "space": {"n_sites": 1},
        "params": {"omegas": [1.0], "drives": [{"amplitude": 0.1, "frequency": 1.0, "sites": [3]}]},
    }
    with pytest.raises(ConfigError, match="missing site 3"):
        config_from_dict(raw)


def test_initial_state_builders(tmp_path):
    config = load_config(write_config(tmp_path, COUPLED))
    space = config.build_space()
    psi = initial_state(config, space)
    assert_allclose(np.linalg.norm(psi), 1.0, atol=1e-14)
    mf = initial_mean_field(config)
    assert mf.n_sites == 2
    assert_allclose(mf.a[0], 0.5)
    assert_allclose(mf.s_z[1], -1.0)


# -- trajectory persistence -------------------------------------------------------


def sample_trajectory(n=5):
    times = np.linspace(0.0, 1.0, n)
    rng = np.random.default_rng(12)
    return Trajectory(
        times=times,
        records={
            "sigma_minus_0": rng.normal(size=n) + 1j * rng.normal(size=n),
            "sigma_plus_0": rng.normal(size=n) + 1j * rng.normal(size=n),
            "sigma_z_0": rng.normal(size=n),
            "a_0": rng.normal(size=n) + 1j * rng.normal(size=n),
            "n_0": rng.uniform(size=n),
            "norm": np.ones(n),
            "energy": rng.normal(size=n),
        },
        meta={"tol": 1e-10},
    )


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_round_trip_bitwise(tmp_path, fmt):
    traj = sample_trajectory()
    path = export_trajectory(traj, fmt, tmp_path / f"t.{fmt}")
    back = import_trajectory(path)
    assert np.array_equal(back.times, traj.times)
    for name, arr in traj.records.items():
        assert np.array_equal(back.records[name], arr), name


def test_csv_column_order(tmp_path):
    traj = sample_trajectory()
    path = export_trajectory(traj, "csv", tmp_path / "t.csv")
    header = path.read_text().splitlines()[0].split(",")
    assert header[0] == "time"
    assert header[1:7] == [
        "sigma_minus_0_re",
        "sigma_minus_0_im",
        "sigma_plus_0_re",
        "sigma_plus_0_im",
        "sigma_z_0",
        "a_0_re",
    ]
    assert header[-2:] == ["norm", "energy"]


def test_empty_trajectory_header_only(tmp_path):
    traj = Trajectory(
        times=np.array([]),
        records={"sigma_z_0": np.array([]), "norm": np.array([]), "energy": np.array([])},
    )
    path = export_trajectory(traj, "csv", tmp_path / "empty.csv")
    lines = path.read_text().splitlines()
    assert len(lines) == 1
    assert lines[0].startswith("time,")


# -- task execution ------------------------------------------------------------------


def test_propagate_task_writes_files_and_report(tmp_path):
    config = load_config(write_config(tmp_path, COUPLED))
    report = run(config, out_dir=tmp_path / "out")
    assert report.passed
    assert (tmp_path / "out" / "trajectory.csv").exists()
    assert (tmp_path / "out" / "trajectory.json").exists()
    saved = json.loads((tmp_path / "out" / "report.json").read_text())
    assert saved["task"] == "propagate"
    assert saved["checks"][0]["name"] == "norm_drift"


def test_repeated_runs_byte_identical(tmp_path):
    config_path = write_config(tmp_path, COUPLED)
    run(load_config(config_path), out_dir=tmp_path / "a")
    run(load_config(config_path), out_dir=tmp_path / "b")
    for name in ("trajectory.csv", "trajectory.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    # reports agree modulo timing
    first = json.loads((tmp_path / "a" / "report.json").read_text())
    second = json.loads((tmp_path / "b" / "report.json").read_text())
    first.pop("elapsed_seconds"), second.pop("elapsed_seconds")
    assert first == second


def test_verify_eom_task_reports_residual_table(tmp_path):
    text = """
task: verify_eom
seed: 11
space:
  n_sites: 2
  field_modes: [{cutoff: 3}]
params:
  omegas: [1.0, 1.0]
  field_modes: [{omega: 1.0}]
verify:
  draws: 3
"""
    config = load_config(write_config(tmp_path, text))
    report = run(config, out_dir=tmp_path / "out")
    assert report.passed
    table = report.results["max_residuals"]
    assert "sigma_minus_0" in table and "a_0" in table
    assert all(v <= 1e-11 for v in table.values())
    assert report.results["draws"] == 3


def test_verify_compact_task_with_negative_control(tmp_path):
    text = """
task: verify_compact
seed: 4
space:
  n_sites: 2
  field_modes: [{cutoff: 2}]
params:
  omegas: [1.0, 1.0]
  field_modes: [{omega: 1.0}]
verify:
  draws: 3
"""
    config = load_config(write_config(tmp_path, text))
    report = run(config, out_dir=tmp_path / "out")
    assert report.passed
    assert report.results["max_residual"] <= 1e-10
    assert report.results["negative_control_min"] > 1e-3


def test_compare_task_emits_paired_files(tmp_path):
    text = COUPLED.replace("task: propagate", "task: compare")
    config = load_config(write_config(tmp_path, text))
    report = run(config, out_dir=tmp_path / "out")
    assert (tmp_path / "out" / "trajectory_exact.csv").exists()
    assert (tmp_path / "out" / "trajectory_meanfield.csv").exists()
    assert "sigma_z_0" in report.results["deviations"]


def test_sweep_derives_configs_and_runs_points(tmp_path):
    text = COUPLED.replace("task: propagate", "task: sweep") + """
sweep:
  path: params.field_modes.0.amplitude
  values: [0.02, 0.04, 0.06, 0.08, 0.1]
  task: propagate
"""
    config = load_config(write_config(tmp_path, text))
    report = run(config, out_dir=tmp_path / "out")
    points = report.results["points"]
    assert len(points) == 5
    assert [p["value"] for p in points] == [0.02, 0.04, 0.06, 0.08, 0.1]
    for i in range(5):
        assert (tmp_path / "out" / f"point_{i:03d}" / "trajectory.csv").exists()


def test_sweep_parallel_workers_match_serial(tmp_path):
    text = COUPLED.replace("task: propagate", "task: sweep") + """
sweep:
  path: params.field_modes.0.amplitude
  values: [0.02, 0.05]
  task: propagate
"""
    config_path = write_config(tmp_path, text)
    run(load_config(config_path), out_dir=tmp_path / "serial", workers=1)
    run(load_config(config_path), out_dir=tmp_path / "parallel", workers=2)
    for i in range(2):
        serial = (tmp_path / "serial" / f"point_{i:03d}" / "trajectory.csv").read_bytes()
        parallel = (tmp_path / "parallel" / f"point_{i:03d}" / "trajectory.csv").read_bytes()
        assert serial == parallel


def test_draw_params_reproducible():
    space = config_from_dict(
        {"space": {"n_sites": 2, "field_modes": [{"cutoff": 2}]},
         "params": {"omegas": [1, 1], "field_modes": [{"omega": 1.0}]}}
    ).build_space()
    a = draw_params(space, np.random.default_rng(5))
    b = draw_params(space, np.random.default_rng(5))
    assert a == b


# -- CLI ---------------------------------------------------------------------------------


def test_cli_propagate(tmp_path, capsys):
    config_path = write_config(tmp_path, COUPLED)
    code = cli.main(
        ["propagate", "--config", str(config_path), "--out", str(tmp_path / "out")]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "task: propagate" in out
    assert (tmp_path / "out" / "trajectory.csv").exists()


def test_cli_rejects_bad_config(tmp_path, capsys):
    path = write_config(tmp_path, "task: [broken\n", name="bad.yaml")
    code = cli.main(["run", "--config", str(path)])
    assert code == 2
    assert "parse error" in capsys.readouterr().err.lower()


def test_cli_seed_override(tmp_path):
    config_path = write_config(tmp_path, COUPLED)
    code = cli.main(
        ["verify-eom", "--config", str(config_path), "--out", str(tmp_path / "v"),
         "--seed", "99"]
    )
    assert code == 0
    saved = json.loads((tmp_path / "v" / "report.json").read_text())
    assert saved["seed"] == 99
    assert saved["task"] == "verify_eom"
