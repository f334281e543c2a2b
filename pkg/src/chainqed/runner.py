"""Configuration ingestion, experiment orchestration and persistence.

Runs are described by declarative YAML configs (archivable and diff-able);
command-line flags only select paths, verbosity, worker counts and task
overrides.  Every randomized check draws from a seeded generator and the
seed is echoed in the report, so a config (including its seed) determines
the outputs byte for byte -- trajectory files carry no timestamps.

Trajectory files come in two flavours: a columnar text format (CSV with a
fixed column order: time, per-site triples in site order, field modes,
phonon modes, norm, energy, then any extra records) and a self-describing
JSON format mirroring the Trajectory structure.  Both round-trip exactly
through :func:`import_trajectory` (floats are written in shortest
round-trip representation).
"""

from __future__ import annotations

import concurrent.futures
import copy
import csv
import hashlib
import json
import time as _time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import dynamics, meanfield
from .hamiltonian import (
    COUPLING_MODES,
    ClassicalDrive,
    FieldMode,
    PhononMode,
    SystemParams,
)
from .hilbert import (
    ModeSpec,
    SpaceIndex,
    SpaceSpec,
    SpaceTooLargeError,
    build_space,
    coherent_local,
    fock_local,
    product_state,
    site_local_state,
)
from .meanfield import MeanFieldState, bloch_state

TASKS = ("propagate", "meanfield", "compare", "verify_eom", "verify_compact", "sweep")

DEFAULT_EOM_THRESHOLD = 1e-11
DEFAULT_COMPACT_THRESHOLD = 1e-10
NEGATIVE_CONTROL_FLOOR = 1e-3


class ConfigError(ValueError):
    """Raised with the full list of validation problems."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid configuration:\n" + "\n".join(f"- {p}" for p in problems))


@dataclass
class RunConfig:
    """Validated run description plus the raw mapping it came from."""

    raw: dict
    task: str
    seed: int
    space_spec: SpaceSpec
    params: SystemParams
    integrate: dict
    initial: dict
    output: dict
    verify: dict
    sweep: dict | None = None

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.raw, sort_keys=True, default=str).encode()
        ).hexdigest()

    def build_space(self) -> SpaceIndex:
        return build_space(self.space_spec)


def _as_list(value, name: str, problems: list[str]) -> list:
    if value is None:
        return []
    if not isinstance(value, list):
        problems.append(f"{name} must be a list")
        return []
    return value


def _parse_complex(value) -> complex:
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, str):
        return complex(value.replace(" ", ""))
    return complex(value)


def load_config(path: str | Path) -> RunConfig:
    """Parse and validate a YAML config, aggregating all problems."""
    path = Path(path)
    if not path.exists():
        raise ConfigError([f"config file not found: {path}"])
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError([f"YAML parse error in {path}: {exc}"]) from exc
    if not isinstance(raw, dict):
        raise ConfigError([f"config root must be a mapping, got {type(raw).__name__}"])
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> RunConfig:
    problems: list[str] = []

    task = raw.get("task", "propagate")
    if task not in TASKS:
        problems.append(f"task must be one of {TASKS}, got {task!r}")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        problems.append(f"seed must be a non-negative integer, got {seed!r}")
        seed = 0

    # -- space ---------------------------------------------------------------
    space_raw = raw.get("space", {})
    n_sites = space_raw.get("n_sites", 1)
    if not isinstance(n_sites, int) or n_sites < 1:
        problems.append(f"space.n_sites must be a positive integer, got {n_sites!r}")
        n_sites = 1
    field_specs = []
    for k, mode in enumerate(_as_list(space_raw.get("field_modes"), "space.field_modes", problems)):
        cutoff = mode.get("cutoff", 1) if isinstance(mode, dict) else mode
        if not isinstance(cutoff, int) or cutoff < 1:
            problems.append(f"space.field_modes[{k}].cutoff must be an integer >= 1")
            cutoff = 1
        field_specs.append(ModeSpec(cutoff))
    phonon_specs = []
    for q, mode in enumerate(_as_list(space_raw.get("phonon_modes"), "space.phonon_modes", problems)):
        cutoff = mode.get("cutoff", 1) if isinstance(mode, dict) else mode
        if not isinstance(cutoff, int) or cutoff < 1:
            problems.append(f"space.phonon_modes[{q}].cutoff must be an integer >= 1")
            cutoff = 1
        phonon_specs.append(ModeSpec(cutoff))
    space_spec = SpaceSpec(n_sites, tuple(field_specs), tuple(phonon_specs))
    try:
        build_space(space_spec)
    except SpaceTooLargeError as exc:
        problems.append(str(exc))

    # -- params ----------------------------------------------------------------
    params_raw = raw.get("params", {})
    if "site_energies" in params_raw:
        energies = params_raw["site_energies"]
    elif "omegas" in params_raw:
        omegas = params_raw["omegas"]
        if isinstance(omegas, (int, float)):
            omegas = [omegas] * n_sites
        energies = [[-0.5 * w, 0.5 * w] for w in omegas]
    else:
        energies = [[-0.5, 0.5]] * n_sites
    if len(energies) != n_sites:
        problems.append(
            f"params.site_energies has {len(energies)} entries for {n_sites} sites"
        )
    for v, pair in enumerate(energies):
        if len(pair) != 2:
            problems.append(f"params.site_energies[{v}] must be [lower, upper]")
        elif not pair[1] > pair[0]:
            problems.append(
                f"params.site_energies[{v}]: upper must exceed lower, got {pair}"
            )

    f_modes = []
    fm_raw = _as_list(params_raw.get("field_modes"), "params.field_modes", problems)
    if len(fm_raw) != len(field_specs):
        problems.append(
            f"params.field_modes has {len(fm_raw)} entries, "
            f"space declares {len(field_specs)} field modes"
        )
    for k, mode in enumerate(fm_raw):
        omega = mode.get("omega")
        if omega is None or omega <= 0:
            problems.append(f"params.field_modes[{k}].omega must be positive")
            omega = 1.0
        overlap = mode.get("polarization_overlap", [1.0] * n_sites)
        if isinstance(overlap, (int, float)):
            overlap = [overlap] * n_sites
        if len(overlap) != n_sites:
            problems.append(
                f"params.field_modes[{k}].polarization_overlap needs one entry "
                f"per site ({n_sites})"
            )
        f_modes.append(
            FieldMode(
                omega=float(omega),
                wavevector=float(mode.get("wavevector", 0.0)),
                amplitude=float(mode.get("amplitude", 0.0)),
                polarization_overlap=tuple(float(x) for x in overlap),
            )
        )

    p_modes = []
    pm_raw = _as_list(params_raw.get("phonon_modes"), "params.phonon_modes", problems)
    if len(pm_raw) != len(phonon_specs):
        problems.append(
            f"params.phonon_modes has {len(pm_raw)} entries, "
            f"space declares {len(phonon_specs)} phonon modes"
        )
    for q, mode in enumerate(pm_raw):
        nu = mode.get("nu")
        if nu is None or nu <= 0:
            problems.append(f"params.phonon_modes[{q}].nu must be positive")
            nu = 1.0
        p_modes.append(PhononMode(nu=float(nu), coupling=float(mode.get("coupling", 0.0))))

    drives = []
    for d, drv in enumerate(_as_list(params_raw.get("drives"), "params.drives", problems)):
        try:
            amplitude = _parse_complex(drv.get("amplitude", 0.0))
        except (TypeError, ValueError):
            problems.append(f"params.drives[{d}].amplitude is not a complex number")
            amplitude = 0.0
        frequency = drv.get("frequency", 0.0)
        sites = drv.get("sites")
        if sites is not None:
            sites = tuple(int(s) for s in sites)
            for s in sites:
                if not 0 <= s < n_sites:
                    problems.append(f"params.drives[{d}] references missing site {s}")
        drives.append(ClassicalDrive(amplitude, float(frequency), sites))

    boundary = params_raw.get("boundary", "open")
    coupling_mode = params_raw.get("coupling_mode", "static_phase_at_t0")
    if coupling_mode not in COUPLING_MODES:
        problems.append(f"params.coupling_mode must be one of {COUPLING_MODES}")
        coupling_mode = "static_phase_at_t0"
    dipole = params_raw.get("dipole", [1.0] * n_sites)
    if isinstance(dipole, (int, float)):
        dipole = [dipole] * n_sites
    if len(dipole) != n_sites:
        problems.append("params.dipole needs one entry per site")
    positions = params_raw.get("site_positions")

    params = None
    try:
        params = SystemParams(
            site_energies=tuple((float(p[0]), float(p[1])) for p in energies),
            exchange_j=float(params_raw.get("exchange_j", 0.0)),
            boundary=boundary,
            field_modes=tuple(f_modes),
            dipole=tuple(float(p) for p in dipole),
            lattice_spacing=float(params_raw.get("lattice_spacing", 1.0)),
            site_positions=tuple(float(x) for x in positions) if positions else None,
            coupling_mode=coupling_mode,
            phonon_modes=tuple(p_modes),
            drives=tuple(drives),
        )
    except (ValueError, TypeError, IndexError) as exc:
        problems.append(str(exc))
    if params is not None:
        try:
            problems.extend(params.validate_against(build_space(space_spec)))
        except SpaceTooLargeError:
            pass

    # -- initial state ------------------------------------------------------------
    initial = raw.get("initial", {})
    site_states = _as_list(initial.get("sites"), "initial.sites", problems)
    if site_states and len(site_states) != n_sites:
        problems.append(
            f"initial.sites has {len(site_states)} entries for {n_sites} sites"
        )
    field_states = _as_list(initial.get("field_modes"), "initial.field_modes", problems)
    if field_states and len(field_states) != len(field_specs):
        problems.append(
            f"initial.field_modes has {len(field_states)} entries, "
            f"space declares {len(field_specs)}"
        )
    phonon_states = _as_list(initial.get("phonon_modes"), "initial.phonon_modes", problems)
    if phonon_states and len(phonon_states) != len(phonon_specs):
        problems.append(
            f"initial.phonon_modes has {len(phonon_states)} entries, "
            f"space declares {len(phonon_specs)}"
        )
    for i, st in enumerate(site_states):
        kind = (st or {}).get("kind", "ground")
        if kind not in ("ground", "excited", "angles"):
            problems.append(f"initial.sites[{i}].kind must be ground/excited/angles")
    for i, st in enumerate(field_states):
        kind = (st or {}).get("kind", "fock")
        if kind not in ("fock", "coherent", "vacuum"):
            problems.append(f"initial.field_modes[{i}].kind must be fock/coherent/vacuum")
    for i, st in enumerate(phonon_states):
        kind = (st or {}).get("kind", "vacuum")
        if kind not in ("fock", "coherent", "vacuum"):
            problems.append(f"initial.phonon_modes[{i}].kind must be fock/coherent/vacuum")

    # -- integration / output -------------------------------------------------------
    integrate = {
        "tol": float(raw.get("integrate", {}).get("tol", 1e-10)),
        "t_end": float(raw.get("integrate", {}).get("t_end", 10.0)),
        "n_out": int(raw.get("integrate", {}).get("n_out", 201)),
        "keep_states": bool(raw.get("integrate", {}).get("keep_states", False)),
    }
    if integrate["tol"] <= 0:
        problems.append("integrate.tol must be positive")
    if integrate["t_end"] <= 0:
        problems.append("integrate.t_end must be positive")
    if integrate["n_out"] < 2:
        problems.append("integrate.n_out must be at least 2")

    output = dict(raw.get("output", {}))
    output.setdefault("formats", ["csv", "json"])
    for fmt in output["formats"]:
        if fmt not in ("csv", "json"):
            problems.append(f"output format {fmt!r} not supported (csv, json)")
    output.setdefault("basename", "trajectory")

    verify = dict(raw.get("verify", {}))
    verify.setdefault("draws", 10)
    verify.setdefault("eom_threshold", DEFAULT_EOM_THRESHOLD)
    verify.setdefault("compact_threshold", DEFAULT_COMPACT_THRESHOLD)

    sweep = raw.get("sweep")
    if task == "sweep":
        if not isinstance(sweep, dict):
            problems.append("sweep task requires a sweep section")
        else:
            if "path" not in sweep:
                problems.append("sweep.path is required")
            values = sweep.get("values")
            if not values:
                problems.append("sweep.values must be a non-empty list")
            subtask = sweep.get("task", "propagate")
            if subtask not in TASKS or subtask == "sweep":
                problems.append(f"sweep.task must be a non-sweep task, got {subtask!r}")

    if problems:
        raise ConfigError(problems)
    return RunConfig(
        raw=raw,
        task=task,
        seed=seed,
        space_spec=space_spec,
        params=params,
        integrate=integrate,
        initial=initial,
        output=output,
        verify=verify,
        sweep=sweep,
    )


# -- initial state assembly ----------------------------------------------------------


def initial_state(config: RunConfig, space: SpaceIndex) -> np.ndarray:
    """Exact product initial state from the config's ``initial`` section."""
    locals_ = []
    site_states = config.initial.get("sites") or [{"kind": "ground"}] * space.n_sites
    for st in site_states:
        locals_.append(
            site_local_state(
                st.get("kind", "ground"),
                float(st.get("theta", 0.0)),
                float(st.get("phi", 0.0)),
            )
        )
    field_states = config.initial.get("field_modes") or [
        {"kind": "vacuum"}
    ] * space.n_field_modes
    for k, st in enumerate(field_states):
        cutoff = space.field_cutoff(k)
        kind = st.get("kind", "vacuum")
        if kind == "vacuum":
            locals_.append(fock_local(0, cutoff))
        elif kind == "fock":
            locals_.append(fock_local(int(st.get("n", 0)), cutoff))
        else:
            locals_.append(coherent_local(_parse_complex(st.get("alpha", 0.0)), cutoff))
    phonon_states = config.initial.get("phonon_modes") or [
        {"kind": "vacuum"}
    ] * space.n_phonon_modes
    for q, st in enumerate(phonon_states):
        cutoff = space.phonon_cutoff(q)
        kind = st.get("kind", "vacuum")
        if kind == "vacuum":
            locals_.append(fock_local(0, cutoff))
        elif kind == "fock":
            locals_.append(fock_local(int(st.get("n", 0)), cutoff))
        else:
            locals_.append(coherent_local(_parse_complex(st.get("beta", 0.0)), cutoff))
    return product_state(space, locals_)


def initial_mean_field(config: RunConfig) -> MeanFieldState:
    """Mean-field image of the same initial product state."""
    n = config.space_spec.n_sites
    s_minus = np.zeros(n, dtype=complex)
    s_z = np.zeros(n)
    site_states = config.initial.get("sites") or [{"kind": "ground"}] * n
    for l, st in enumerate(site_states):
        kind = st.get("kind", "ground")
        if kind == "ground":
            s_minus[l], s_z[l] = 0.0, -1.0
        elif kind == "excited":
            s_minus[l], s_z[l] = 0.0, 1.0
        else:
            s_minus[l], s_z[l] = bloch_state(
                float(st.get("theta", 0.0)), float(st.get("phi", 0.0))
            )
    n_field = len(config.space_spec.field_modes)
    a = np.zeros(n_field, dtype=complex)
    for k, st in enumerate(config.initial.get("field_modes") or [{}] * n_field):
        if st.get("kind") == "coherent":
            a[k] = _parse_complex(st.get("alpha", 0.0))
        elif st.get("kind") == "fock" and int(st.get("n", 0)) != 0:
            raise ValueError(
                "mean-field runs need coherent or vacuum field initial states "
                "(a Fock state has no c-number amplitude)"
            )
    n_phonon = len(config.space_spec.phonon_modes)
    b = np.zeros(n_phonon, dtype=complex)
    for q, st in enumerate(config.initial.get("phonon_modes") or [{}] * n_phonon):
        if st.get("kind") == "coherent":
            b[q] = _parse_complex(st.get("beta", 0.0))
    return MeanFieldState(s_minus, s_z, a, b)


# -- trajectory persistence --------------------------------------------------------------


def _column_order(records: dict) -> list[str]:
    """Fixed column order: site triples, field modes, phonon modes, norm, energy."""
    names = set(records)
    ordered: list[str] = []

    def take(name: str):
        if name in names:
            ordered.append(name)
            names.remove(name)

    site_ids = sorted(
        int(n.rsplit("_", 1)[1]) for n in records if n.startswith("sigma_z_")
    )
    for l in site_ids:
        take(f"sigma_minus_{l}")
        take(f"sigma_plus_{l}")
        take(f"sigma_z_{l}")
    mode_ids = sorted(int(n.rsplit("_", 1)[1]) for n in records if n.startswith("a_"))
    for k in mode_ids:
        take(f"a_{k}")
        take(f"n_{k}")
        take(f"top_field_{k}")
    phonon_ids = sorted(int(n.rsplit("_", 1)[1]) for n in records if n.startswith("b_"))
    for q in phonon_ids:
        take(f"b_{q}")
        take(f"nb_{q}")
        take(f"top_phonon_{q}")
    take("norm")
    take("energy")
    ordered.extend(sorted(names))
    return ordered


def export_trajectory(traj: dynamics.Trajectory, fmt: str, path: str | Path) -> Path:
    """Write a trajectory to CSV or JSON (floats in round-trip precision)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    order = _column_order(traj.records)
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = ["time"]
            for name in order:
                if np.iscomplexobj(traj.records[name]):
                    header += [f"{name}_re", f"{name}_im"]
                else:
                    header.append(name)
            writer.writerow(header)
            for i in range(len(traj.times)):
                row = [repr(float(traj.times[i]))]
                for name in order:
                    val = traj.records[name][i]
                    if np.iscomplexobj(traj.records[name]):
                        row += [repr(float(val.real)), repr(float(val.imag))]
                    else:
                        row.append(repr(float(val)))
                writer.writerow(row)
    elif fmt == "json":
        payload = {
            "times": [float(t) for t in traj.times],
            "records": {},
            "meta": _jsonable(traj.meta),
        }
        for name in order:
            arr = traj.records[name]
            if np.iscomplexobj(arr):
                payload["records"][name] = {
                    "dtype": "complex",
                    "values": [[float(v.real), float(v.imag)] for v in arr],
                }
            else:
                payload["records"][name] = {
                    "dtype": "real",
                    "values": [float(v) for v in arr],
                }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")
    else:
        raise ValueError(f"unknown trajectory format {fmt!r}")
    return path


def import_trajectory(path: str | Path) -> dynamics.Trajectory:
    """Read a trajectory written by :func:`export_trajectory`."""
    path = Path(path)
    if path.suffix == ".json":
        with open(path) as fh:
            payload = json.load(fh)
        records = {}
        for name, rec in payload["records"].items():
            if rec["dtype"] == "complex":
                records[name] = np.array(
                    [complex(re, im) for re, im in rec["values"]], dtype=np.complex128
                )
            else:
                records[name] = np.array(rec["values"], dtype=float)
        return dynamics.Trajectory(
            times=np.array(payload["times"], dtype=float),
            records=records,
            meta=payload.get("meta", {}),
        )
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader]
    times = np.array([float(r[0]) for r in rows])
    records: dict[str, np.ndarray] = {}
    col = 1
    while col < len(header):
        name = header[col]
        if name.endswith("_re") and col + 1 < len(header) and header[col + 1] == name[:-3] + "_im":
            base = name[:-3]
            records[base] = np.array(
                [complex(float(r[col]), float(r[col + 1])) for r in rows],
                dtype=np.complex128,
            )
            col += 2
        else:
            records[name] = np.array([float(r[col]) for r in rows])
            col += 1
    return dynamics.Trajectory(times=times, records=records, meta={})


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


# -- run reports ------------------------------------------------------------------------


@dataclass
class Check:
    name: str
    tolerance: float
    measured: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: measured {self.measured:.3e} vs tolerance {self.tolerance:.1e}"


@dataclass
class RunReport:
    task: str
    config_hash: str
    seed: int
    results: dict = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)
    trajectory_files: list[str] = field(default_factory=list)
    elapsed_seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "results": _jsonable(self.results),
            "checks": [
                {
                    "name": c.name,
                    "tolerance": c.tolerance,
                    "measured": c.measured,
                    "passed": c.passed,
                }
                for c in self.checks
            ],
            "trajectory_files": self.trajectory_files,
            "elapsed_seconds": self.elapsed_seconds,
        }

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")
        return path

    def summary(self) -> str:
        lines = [f"task: {self.task}  (config {self.config_hash[:12]}, seed {self.seed})"]
        lines += [c.line() for c in self.checks]
        lines += [f"wrote {f}" for f in self.trajectory_files]
        lines.append(f"elapsed: {self.elapsed_seconds:.2f} s")
        return "\n".join(lines)


# -- randomized parameter draws (verification tasks) ---------------------------------------


def draw_params(
    space: SpaceIndex,
    rng: np.random.Generator,
    *,
    coupling_mode: str = "static_phase_at_t0",
    boundary: str = "open",
    with_exchange: bool = True,
) -> SystemParams:
    """Random physical parameters on a given space (verification draws)."""
    n = space.n_sites
    energies = []
    for _ in range(n):
        omega = rng.uniform(0.5, 1.5)
        shift = rng.uniform(-0.2, 0.2)
        energies.append((shift - 0.5 * omega, shift + 0.5 * omega))
    f_modes = tuple(
        FieldMode(
            omega=rng.uniform(0.6, 1.4),
            wavevector=rng.uniform(0.0, np.pi),
            amplitude=rng.uniform(0.1, 0.4),
            polarization_overlap=tuple(rng.uniform(0.5, 1.0, size=n)),
        )
        for _ in range(space.n_field_modes)
    )
    p_modes = tuple(
        PhononMode(nu=rng.uniform(0.3, 1.0), coupling=rng.uniform(0.05, 0.3))
        for _ in range(space.n_phonon_modes)
    )
    return SystemParams(
        site_energies=tuple(energies),
        exchange_j=rng.uniform(-0.3, 0.3) if with_exchange else 0.0,
        boundary=boundary,
        field_modes=f_modes,
        dipole=tuple(rng.uniform(0.5, 1.5, size=n)),
        lattice_spacing=1.0,
        coupling_mode=coupling_mode,
        phonon_modes=p_modes,
    )


# -- task implementations --------------------------------------------------------------------


def _write_trajectory(config: RunConfig, traj, out_dir: Path, basename: str) -> list[str]:
    files = []
    for fmt in config.output["formats"]:
        suffix = {"csv": ".csv", "json": ".json"}[fmt]
        path = export_trajectory(traj, fmt, out_dir / f"{basename}{suffix}")
        files.append(str(path))
    return files


def _task_propagate(config: RunConfig, out_dir: Path, report: RunReport, verbose: bool):
    space = config.build_space()
    psi0 = initial_state(config, space)
    traj = dynamics.propagate(
        space,
        config.params,
        psi0,
        config.integrate["t_end"],
        tol=config.integrate["tol"],
        n_out=config.integrate["n_out"],
        keep_states=config.integrate["keep_states"],
    )
    report.results["meta"] = traj.meta
    report.trajectory_files += _write_trajectory(config, traj, out_dir, config.output["basename"])
    report.checks.append(
        Check("norm_drift", dynamics.NORM_DRIFT_WARNING, traj.meta["norm_drift"],
              traj.meta["norm_drift"] <= dynamics.NORM_DRIFT_WARNING)
    )


def _task_meanfield(config: RunConfig, out_dir: Path, report: RunReport, verbose: bool):
    mf0 = initial_mean_field(config)
    traj = meanfield.mf_propagate(
        mf0,
        config.params,
        config.integrate["t_end"],
        tol=config.integrate["tol"],
        n_out=config.integrate["n_out"],
    )
    report.results["meta"] = traj.meta
    report.trajectory_files += _write_trajectory(
        config, traj, out_dir, config.output["basename"] + "_meanfield"
    )


def _task_compare(config: RunConfig, out_dir: Path, report: RunReport, verbose: bool):
    space = config.build_space()
    psi0 = initial_state(config, space)
    exact = dynamics.propagate(
        space,
        config.params,
        psi0,
        config.integrate["t_end"],
        tol=config.integrate["tol"],
        n_out=config.integrate["n_out"],
    )
    mf_traj = meanfield.mf_propagate(
        initial_mean_field(config),
        config.params,
        config.integrate["t_end"],
        tol=config.integrate["tol"],
        n_out=config.integrate["n_out"],
    )
    report.trajectory_files += _write_trajectory(
        config, exact, out_dir, config.output["basename"] + "_exact"
    )
    report.trajectory_files += _write_trajectory(
        config, mf_traj, out_dir, config.output["basename"] + "_meanfield"
    )
    shared = sorted(set(exact.records) & set(mf_traj.records) - {"energy", "norm"})
    deviations = {}
    for name in shared:
        dev = np.max(np.abs(exact.records[name] - mf_traj.records[name]))
        deviations[name] = float(dev)
    report.results["deviations"] = deviations
    report.results["exact_meta"] = exact.meta
    report.results["meanfield_meta"] = mf_traj.meta


def _task_verify_eom(config: RunConfig, out_dir: Path, report: RunReport, verbose: bool):
    space = config.build_space()
    rng = np.random.default_rng(config.seed)
    threshold = config.verify["eom_threshold"]
    draws = config.verify["draws"]
    worst: dict[str, float] = {}
    for _ in range(draws):
        params = draw_params(space, rng, coupling_mode=config.params.coupling_mode)
        residuals = dynamics.verify_heisenberg_identities(space, params)
        for name, value in residuals.items():
            worst[name] = max(worst.get(name, 0.0), value)
    report.results["max_residuals"] = worst
    report.results["draws"] = draws
    for name, value in sorted(worst.items()):
        report.checks.append(Check(f"eom_{name}", threshold, value, value <= threshold))


def _task_verify_compact(config: RunConfig, out_dir: Path, report: RunReport, verbose: bool):
    space = config.build_space()
    rng = np.random.default_rng(config.seed)
    threshold = config.verify["compact_threshold"]
    draws = config.verify["draws"]
    worst = 0.0
    control_min = np.inf
    for _ in range(draws):
        params = draw_params(space, rng, coupling_mode=config.params.coupling_mode)
        for l in range(space.n_sites):
            worst = max(worst, dynamics.verify_compact_form(space, params, l))
            control = dynamics.verify_compact_form(
                space, params, l, metric=(1.0, 1.0, 1.0)
            )
            control_min = min(control_min, control)
    report.results["max_residual"] = worst
    report.results["negative_control_min"] = float(control_min)
    report.results["draws"] = draws
    report.checks.append(Check("compact_residual", threshold, worst, worst <= threshold))
    report.checks.append(
        Check(
            "compact_negative_control",
            NEGATIVE_CONTROL_FLOOR,
            float(control_min),
            control_min > NEGATIVE_CONTROL_FLOOR,
        )
    )


def _set_by_path(raw: dict, dotted: str, value):
    keys = dotted.split(".")
    node = raw
    for key in keys[:-1]:
        node = node[int(key)] if isinstance(node, list) else node[key]
    last = keys[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value


def _run_sweep_point(args):
    raw, index, out_dir, verbose = args
    config = config_from_dict(raw)
    point_dir = Path(out_dir) / f"point_{index:03d}"
    report = run(config, out_dir=point_dir, verbose=verbose)
    return index, report.to_dict()


def _task_sweep(config: RunConfig, out_dir: Path, report: RunReport, verbose: bool, workers: int):
    sweep = config.sweep
    if not isinstance(sweep, dict) or "path" not in sweep or not sweep.get("values"):
        raise ConfigError(["sweep task requires a sweep section with path and values"])
    path, values = sweep["path"], sweep["values"]
    subtask = sweep.get("task", "propagate")
    jobs = []
    for i, value in enumerate(values):
        raw = copy.deepcopy(config.raw)
        raw["task"] = subtask
        raw.pop("sweep", None)
        try:
            _set_by_path(raw, path, value)
        except (KeyError, IndexError, TypeError) as exc:
            raise ConfigError([f"sweep.path {path!r} not resolvable: {exc}"]) from exc
        jobs.append((raw, i, str(out_dir), verbose))
    results = {}
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            for index, rep in pool.map(_run_sweep_point, jobs):
                results[index] = rep
    else:
        for job in jobs:
            index, rep = _run_sweep_point(job)
            results[index] = rep
    report.results["points"] = [
        {"value": values[i], "report": results[i]} for i in sorted(results)
    ]
    report.results["path"] = path


def run(
    config: RunConfig,
    out_dir: str | Path | None = None,
    workers: int = 1,
    verbose: bool = False,
    task_override: str | None = None,
) -> RunReport:
    """Execute a validated config and write its report and trajectory files."""
    task = task_override or config.task
    out_dir = Path(out_dir) if out_dir is not None else Path(config.output.get("directory", "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    report = RunReport(task=task, config_hash=config.config_hash, seed=config.seed)
    started = _time.perf_counter()
    if task == "propagate":
        _task_propagate(config, out_dir, report, verbose)
    elif task == "meanfield":
        _task_meanfield(config, out_dir, report, verbose)
    elif task == "compare":
        _task_compare(config, out_dir, report, verbose)
    elif task == "verify_eom":
        _task_verify_eom(config, out_dir, report, verbose)
    elif task == "verify_compact":
        _task_verify_compact(config, out_dir, report, verbose)
    elif task == "sweep":
        _task_sweep(config, out_dir, report, verbose, workers)
    else:
        raise ConfigError([f"unknown task {task!r}"])
    report.elapsed_seconds = _time.perf_counter() - started
    report.save(out_dir / "report.json")
    if verbose:
        print(report.summary())
    return report
