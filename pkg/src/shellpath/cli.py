"""Command line front end.

``shellpath bench <name>`` runs one of the standard examples with its
default settings, ``shellpath run --config file.ini`` runs a configured
analysis and ``shellpath mesh-info`` summarises a control mesh. Runs write

* ``history.csv``: one row per converged step, flushed as it is recorded,
* ``snapshots/``: legacy ASCII VTK files of the limit surface and the
  deformed control net at the configured cadence,
* ``run.json``: configuration echo, library versions and the outcome,
* ``control_mesh.txt``: the analysis control mesh,
* ``plot_history.py``: a matplotlib script for the pressure curves.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import json
import logging
import math
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .assembly import PatchTable, energy_density
from .benchmarks import BALLOON_MU, BENCHMARKS, generate_benchmark_mesh
from .continuation import PathHistory, SolverSettings, StabilitySettings, run_continuation
from .mesh import (ControlMesh, MeshError, catmull_clark_subdivide, load_control_mesh, needs_presubdivision,
                   write_control_mesh)
from .problem import ShellProblem
from .shell_core import MaterialParams

log = logging.getLogger("shellpath")

HISTORY_VERSION = 1
HISTORY_MAGIC = f"# shellpath-history v{HISTORY_VERSION}"
BASE_COLUMNS = ("step", "branch", "kappa", "pressure", "volume", "max_disp")
ALIASES = {"sphere": "sphere_octant"}

# Per-example defaults. Pressures of the balloon and torus are scaled by mu,
# so the load factor is the dimensionless pressure P / mu.
BENCH_DEFAULTS = {
    "plate": dict(p_ref=1.0, dkappa0=0.05, target_pressure=35.0, ds_max=5.0, max_steps=200),
    "sphere_octant": dict(p_ref=BALLOON_MU, dkappa0=0.002, ds_max=2.0, max_steps=300,
                          stretch={1: 2.1, 2: 4.6}),
    "torus": dict(p_ref=BALLOON_MU, dkappa0=0.0005, ds_max=1.0, max_steps=110, n_eigs=4,
                  branching=True, beta=1.0, branch_steps=20),
    # the airbag is inflated in equal pressure increments; wrinkle snaps are
    # crossed by halving an increment instead of tracing every fold
    "airbag": dict(p_ref=1.0, dkappa0=200.0, target_pressure=5000.0, arc_length=False, max_step=0.02,
                   max_iter=60, max_steps=200),
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key or line."""


# ---------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------
@dataclass
class RunConfig:
    benchmark: str | None = None
    mesh_path: str | None = None
    refine: int = 0
    case: int = 1
    material: dict = field(default_factory=dict)
    fixes: list = field(default_factory=list)
    p_ref: float = 1.0
    dkappa0: float = 0.1
    target_pressure: float | None = None
    target_volume: float | None = None
    target_stretch: float | None = None
    solver: dict = field(default_factory=dict)
    stability: dict = field(default_factory=dict)
    out_dir: str = "shellpath-out"
    snapshot_every: int = 10
    symmetry_factor: float | None = None


_SCHEMA = {
    "geometry": {"benchmark": str, "mesh": str, "refine": int, "case": int, "symmetry_factor": float},
    "material": {"model": str, "thickness": float, "c1": float, "c2": float, "E": float, "nu": float},
    "constraints": {"fix": str},
    "load": {"p_ref": float, "dkappa0": float, "target_pressure": float, "target_volume": float,
             "target_stretch": float},
    "solver": {"tol_rel": float, "abs_tol": float, "max_iter": int, "ds_min": float, "ds_max": float,
               "psi": float, "target_iters": float, "max_steps": int, "max_halvings": int,
               "arc_length": bool, "max_step": float},
    "stability": {"n_eigs": int, "zero_tol": float, "beta": float, "branching": bool,
                  "branch_steps": int, "thickness": float, "phase_lock": bool},
    "output": {"dir": str, "snapshot_every": int},
}
_REQUIRED = {"geometry": (), "material": ("model", "thickness"), "load": ("p_ref", "dkappa0")}


def _line_of(text: str, section: str, key: str | None = None) -> int | None:
    current = None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if key is None and current == section:
                return no
        elif current == section and key is not None and "=" in line:
            if line.split("=", 1)[0].strip() == key:
                return no
    return None


def _where(text, section, key=None) -> str:
    no = _line_of(text, section, key)
    return f"line {no}: " if no else ""


def _convert(kind, raw: str):
    if kind is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind is str:
        return raw.strip()
    return kind(raw.strip())


def _parse_fixes(raw: str) -> list:
    """``point:component[=value]`` tokens separated by whitespace or commas."""
    out = []
    for tok in raw.replace(",", " ").split():
        head, _, val = tok.partition("=")
        pt, _, comp = head.partition(":")
        if not comp:
            raise ValueError(f"fix {tok!r} is not point:component")
        out.append((int(pt), int(comp), float(val) if val else 0.0))
    return out


def parse_config(text: str) -> RunConfig:
    """Parse and validate an INI-style run description."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case sensitive (E vs e)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from exc

    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{_where(text, section)}unknown section [{section}]")
        for key in cp[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{_where(text, section, key)}unknown key {section}.{key}")
    for section, keys in _REQUIRED.items():
        if not cp.has_section(section):
            raise ConfigError(f"missing section [{section}] (required keys: "
                              f"{', '.join(f'{section}.{k}' for k in keys) or 'benchmark or mesh'})")
        for key in keys:
            if key not in cp[section]:
                raise ConfigError(f"{_where(text, section)}missing key {section}.{key}")

    values = {}
    for section in cp.sections():
        for key, raw in cp[section].items():
            try:
                values[(section, key)] = _convert(_SCHEMA[section][key], raw)
            except ValueError as exc:
                raise ConfigError(f"{_where(text, section, key)}bad value for {section}.{key}: {exc}") from exc

    cfg = RunConfig()
    geo = {k: v for (s, k), v in values.items() if s == "geometry"}
    if ("benchmark" in geo) == ("mesh" in geo):
        raise ConfigError(f"{_where(text, 'geometry')}geometry needs exactly one of geometry.benchmark "
                          "or geometry.mesh")
    if "benchmark" in geo:
        name = ALIASES.get(geo["benchmark"], geo["benchmark"])
        if name not in BENCHMARKS:
            raise ConfigError(f"{_where(text, 'geometry', 'benchmark')}unknown benchmark "
                              f"{geo['benchmark']!r}; choose from {', '.join(BENCHMARKS)}")
        cfg.benchmark = name
    else:
        cfg.mesh_path = geo["mesh"]
    cfg.refine = geo.get("refine", 0)
    cfg.case = geo.get("case", 1)
    cfg.symmetry_factor = geo.get("symmetry_factor")
    if cfg.refine < 0:
        raise ConfigError(f"{_where(text, 'geometry', 'refine')}geometry.refine must be >= 0")

    mat = {k: v for (s, k), v in values.items() if s == "material"}
    need = ("c1", "c2") if mat["model"] == "mooney_rivlin" else ("E", "nu")
    if mat["model"] not in ("mooney_rivlin", "stvk"):
        raise ConfigError(f"{_where(text, 'material', 'model')}material.model must be mooney_rivlin or stvk")
    for key in need:
        if key not in mat:
            raise ConfigError(f"{_where(text, 'material')}missing key material.{key}")
    try:
        MaterialParams(**mat)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{_where(text, 'material')}invalid material: {exc}") from exc
    cfg.material = mat

    if ("constraints", "fix") in values:
        try:
            cfg.fixes = _parse_fixes(values[("constraints", "fix")])
        except ValueError as exc:
            raise ConfigError(f"{_where(text, 'constraints', 'fix')}{exc}") from exc

    load = {k: v for (s, k), v in values.items() if s == "load"}
    cfg.p_ref = load["p_ref"]
    cfg.dkappa0 = load["dkappa0"]
    cfg.target_pressure = load.get("target_pressure")
    cfg.target_volume = load.get("target_volume")
    cfg.target_stretch = load.get("target_stretch")
    if cfg.dkappa0 == 0.0:
        raise ConfigError(f"{_where(text, 'load', 'dkappa0')}load.dkappa0 must be nonzero")
    for key in ("target_volume", "target_stretch"):
        v = load.get(key)
        if v is not None and v <= 0:
            raise ConfigError(f"{_where(text, 'load', key)}load.{key} must be positive")

    cfg.solver = {k: v for (s, k), v in values.items() if s == "solver"}
    cfg.stability = {k: v for (s, k), v in values.items() if s == "stability"}
    for key in ("tol_rel", "ds_max", "max_iter", "max_steps"):
        if key in cfg.solver and cfg.solver[key] <= 0:
            raise ConfigError(f"{_where(text, 'solver', key)}solver.{key} must be positive")
    out = {k: v for (s, k), v in values.items() if s == "output"}
    cfg.out_dir = out.get("dir", cfg.out_dir)
    cfg.snapshot_every = out.get("snapshot_every", cfg.snapshot_every)
    if cfg.snapshot_every < 0:
        raise ConfigError(f"{_where(text, 'output', 'snapshot_every')}output.snapshot_every must be >= 0")
    return cfg


def load_config(path: str) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text)


# ---------------------------------------------------------------------
# History CSV
# ---------------------------------------------------------------------
def history_columns(n_eigs: int) -> list:
    return list(BASE_COLUMNS) + [f"eig{k + 1}" for k in range(n_eigs)] + ["newton_iters"]


class HistoryWriter:
    """Append one CSV row per record and push it to disk immediately."""

    def __init__(self, path, n_eigs: int):
        self.path = Path(path)
        self.n_eigs = int(n_eigs)
        self._fh = open(self.path, "w", newline="", encoding="ascii")
        self._fh.write(HISTORY_MAGIC + "\n")
        self._csv = csv.writer(self._fh)
        self._csv.writerow(history_columns(self.n_eigs))
        self._sync()

    def _sync(self):
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def __call__(self, rec) -> None:
        eigs = list(rec.eigenvalues[: self.n_eigs])
        eigs += [float("nan")] * (self.n_eigs - len(eigs))
        row = [rec.step, rec.branch] + [repr(float(x)) for x in
                                        (rec.kappa, rec.pressure, rec.volume, rec.max_disp)]
        row += [repr(float(x)) for x in eigs] + [rec.newton_iters]
        self._csv.writerow(row)
        self._sync()

    def close(self):
        if not self._fh.closed:
            self._sync()
            self._fh.close()


def read_history(path) -> dict:
    """Read ``history.csv`` back, checking the version line and the column schema."""
    with open(path, newline="", encoding="ascii") as fh:
        first = fh.readline().rstrip("\n")
        if first != HISTORY_MAGIC:
            raise ValueError(f"{path}: expected header {HISTORY_MAGIC!r}, found {first!r}")
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: missing column header")
    header = rows[0]
    n_eigs = len(header) - len(BASE_COLUMNS) - 1
    if n_eigs < 0 or header != history_columns(n_eigs):
        raise ValueError(f"{path}: unexpected columns {header}")
    data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float).reshape(-1, len(header))
    out = {name: data[:, k] for k, name in enumerate(header)}
    for name in ("step", "branch", "newton_iters"):
        out[name] = out[name].astype(int)
    return out


# ---------------------------------------------------------------------
# Snapshots
# ---------------------------------------------------------------------
def _sample_grid(k: int):
    t = np.linspace(0.0, 1.0, k + 1)
    pts = np.array([(u, v) for v in t for u in t])
    cells = []
    for j in range(k):
        for i in range(k):
            a = i + (k + 1) * j
            cells.append([a, a + 1, a + k + 2, a + k + 1])
    return pts, np.array(cells)


def _per_face(table: PatchTable, x_full, n_faces):
    Q = len(table.points)
    out = np.zeros((n_faces, Q, 3))
    for g, sl in table.chunks():
        val, _, _ = PatchTable.field_derivatives(g, sl, x_full)
        out[g.faces[sl]] = val.reshape(-1, Q, 3)
    return out


def write_vtk_surface(path, problem: ShellProblem, u_full, table: PatchTable, cells) -> None:
    """Limit surface sampled on every face: point data ``|u|``, ``u_z``; cell data ``n:eps``."""
    mesh = problem.mesh
    X = _per_face(table, mesh.vertices.ravel(), mesh.n_faces)
    U = _per_face(table, u_full, mesh.n_faces)
    Q = X.shape[1]
    pts = (X + U).reshape(-1, 3)
    disp = U.reshape(-1, 3)
    conn = (cells[None, :, :] + Q * np.arange(mesh.n_faces)[:, None, None]).reshape(-1, 4)
    dens = np.repeat(energy_density(problem.disc, u_full), len(cells))
    if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(dens))):
        raise ValueError("snapshot contains non-finite values")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("# vtk DataFile Version 3.0\nshellpath limit surface\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {len(pts)} double\n")
        np.savetxt(fh, pts, fmt="%.10g")
        fh.write(f"CELLS {len(conn)} {5 * len(conn)}\n")
        np.savetxt(fh, np.hstack([np.full((len(conn), 1), 4), conn]), fmt="%d")
        fh.write(f"CELL_TYPES {len(conn)}\n")
        np.savetxt(fh, np.full(len(conn), 9), fmt="%d")
        fh.write(f"POINT_DATA {len(pts)}\nSCALARS disp_magnitude double 1\nLOOKUP_TABLE default\n")
        np.savetxt(fh, np.linalg.norm(disp, axis=1), fmt="%.10g")
        fh.write("SCALARS u_z double 1\nLOOKUP_TABLE default\n")
        np.savetxt(fh, disp[:, 2], fmt="%.10g")
        fh.write(f"CELL_DATA {len(conn)}\nSCALARS energy_density double 1\nLOOKUP_TABLE default\n")
        np.savetxt(fh, dens, fmt="%.10g")


def write_vtk_control(path, mesh: ControlMesh, u_full) -> None:
    """Deformed control net as quads."""
    pts = mesh.vertices + np.asarray(u_full).reshape(-1, 3)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("# vtk DataFile Version 3.0\nshellpath control net\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {len(pts)} double\n")
        np.savetxt(fh, pts, fmt="%.10g")
        fh.write(f"CELLS {mesh.n_faces} {5 * mesh.n_faces}\n")
        np.savetxt(fh, np.hstack([np.full((mesh.n_faces, 1), 4), mesh.faces]), fmt="%d")
        fh.write(f"CELL_TYPES {mesh.n_faces}\n")
        np.savetxt(fh, np.full(mesh.n_faces, 9), fmt="%d")


PLOT_SCRIPT = '''"""Pressure curves from history.csv (generated by shellpath {version})."""
import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "history.csv"
with open(path) as fh:
    fh.readline()  # version line
    rows = list(csv.DictReader(fh))
fig, axes = plt.subplots(1, 2, figsize=(10, 4))
for b in sorted({{int(r["branch"]) for r in rows}}):
    sel = [r for r in rows if int(r["branch"]) == b]
    p = [float(r["pressure"]) for r in sel]
    label = "principal" if b == 0 else f"branch {{b}}"
    axes[0].plot([float(r["volume"]) for r in sel], p, ".-", label=label)
    axes[1].plot([float(r["max_disp"]) for r in sel], p, ".-", label=label)
axes[0].set_xlabel("enclosed volume")
axes[1].set_xlabel("max |u|")
for ax in axes:
    ax.set_ylabel("pressure")
    ax.legend()
fig.tight_layout()
fig.savefig("pressure_curves.png", dpi=150)
'''


# ---------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------
def build_problem(cfg: RunConfig):
    """Mesh, constraints and material of a configuration as a :class:`ShellProblem`."""
    if cfg.benchmark is not None:
        kw = {}
        if cfg.benchmark in ("sphere_octant", "torus"):
            kw["case"] = cfg.case
        bench = generate_benchmark_mesh(cfg.benchmark, cfg.refine, **kw)
        mesh, fixes = bench.mesh, list(bench.fixes) + list(cfg.fixes)
        sym = cfg.symmetry_factor if cfg.symmetry_factor is not None else bench.meta.get("symmetry_factor")
    else:
        try:
            mesh = load_control_mesh(cfg.mesh_path)
        except OSError as exc:
            raise ConfigError(f"cannot read mesh {cfg.mesh_path}: {exc}") from exc
        for _ in range(cfg.refine):
            mesh = catmull_clark_subdivide(mesh)
        fixes, sym = list(cfg.fixes), cfg.symmetry_factor
    material = MaterialParams(**cfg.material)
    return ShellProblem(mesh, material, fixes, cfg.p_ref, sym)


def solver_settings(cfg: RunConfig, problem: ShellProblem, V0: float):
    """Continuation settings of a configuration; ``V0`` is the reference volume."""
    solver = SolverSettings(dkappa0=cfg.dkappa0, **cfg.solver)
    if cfg.target_pressure is not None:
        solver.target_kappa = cfg.target_pressure / cfg.p_ref
    if cfg.target_volume is not None:
        solver.target_volume = cfg.target_volume
    if cfg.target_stretch is not None and math.isfinite(V0):
        solver.target_volume = V0 * cfg.target_stretch**3
    stab = dict(cfg.stability)
    stab.setdefault("thickness", problem.disc.material.thickness)
    return solver, StabilitySettings(**stab)


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return _json_safe(obj.item())
    return obj


def _write_json(path, payload):
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(json.dumps(_json_safe(payload), indent=2) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def run(cfg: RunConfig, argv=None) -> int:
    """Execute a configured analysis. Returns the process exit status."""
    out = Path(cfg.out_dir)
    (out / "snapshots").mkdir(parents=True, exist_ok=True)
    problem = build_problem(cfg)
    u0 = np.zeros(problem.dofmap.n_free)
    V0 = problem.volume(u0)
    solver, stab = solver_settings(cfg, problem, V0)
    started = time.time()
    prov = {
        "shellpath": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
        "platform": platform.platform(),
        "argv": list(argv) if argv is not None else None,
        "config": dataclasses.asdict(cfg),
        "solver": dataclasses.asdict(solver),
        "stability": dataclasses.asdict(stab),
        "n_faces": problem.mesh.n_faces,
        "n_free": problem.dofmap.n_free,
        "reference_volume": V0,
        "history_version": HISTORY_VERSION,
        "status": "running",
        "started": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(started)),
    }
    _write_json(out / "run.json", prov)
    with open(out / "control_mesh.txt", "w", encoding="ascii", newline="\n") as fh:
        write_control_mesh(problem.mesh, fh)
    (out / "plot_history.py").write_text(PLOT_SCRIPT.format(version=__version__), encoding="utf-8")

    pts, cells = _sample_grid(4)
    table = PatchTable(problem.mesh, pts)
    snaps = []

    def snapshot(state_u, step, branch):
        u_full = problem.full(state_u)
        stem = f"step_b{branch}_{step:05d}"
        write_vtk_surface(out / "snapshots" / f"{stem}.vtk", problem, u_full, table, cells)
        write_vtk_control(out / "snapshots" / f"{stem}_control.vtk", problem.mesh, u_full)
        snaps.append(stem)

    last = {}

    def on_step(state, rec):
        last["state"] = state
        log.info("step %d branch %d  p = %.6g  V = %.6g  max|u| = %.4g  (%d its)", rec.step, rec.branch,
                 rec.pressure, rec.volume, rec.max_disp, rec.newton_iters)
        if cfg.snapshot_every and rec.step % cfg.snapshot_every == 0:
            snapshot(state.u, rec.step, rec.branch)

    writer = HistoryWriter(out / "history.csv", stab.n_eigs)
    history = PathHistory(sink=writer)
    try:
        if cfg.snapshot_every:
            snapshot(u0, 0, 0)
        history = run_continuation(problem.continuation_problem(on_step), solver, stab, history)
        final = last.get("state")
        if final is not None and cfg.snapshot_every and final.step % cfg.snapshot_every:
            snapshot(final.u, final.step, final.branch)
    finally:
        writer.close()
    prov.update(
        status=history.status,
        message=history.message,
        runtime_s=time.time() - started,
        steps=len(history.records),
        failed_steps=history.failed_steps,
        limit_points=history.limit_points,
        bifurcations=history.bifurcations,
        snapshots=snaps,
        max_residual=max((r.residual for r in history.records), default=0.0),
    )
    _write_json(out / "run.json", prov)
    if history.status == "failed":
        log.error("solver aborted: %s (partial history in %s)", history.message, out / "history.csv")
        print(f"shellpath: solver aborted: {history.message}", file=sys.stderr)
        return 1
    if history.status == "stopped":
        log.warning("%s", history.message)
    return 0


def bench_config(name: str, refine: int = 0, case: int = 1, pressure: float | None = None,
                 out: str | None = None, stretch: float | None = None, max_steps: int | None = None,
                 snapshot_every: int = 10) -> RunConfig:
    """Default configuration of a standard example."""
    name = ALIASES.get(name, name)
    if name not in BENCHMARKS:
        raise ConfigError(f"unknown benchmark {name!r}; choose from {', '.join(BENCHMARKS)}")
    d = dict(BENCH_DEFAULTS[name])
    kw = {"case": case} if name in ("sphere_octant", "torus") else {}
    if name == "torus" and case == 1:
        kw["case"] = 2  # the torus example uses the second balloon material
    bench = generate_benchmark_mesh(name, refine, **kw)
    mat = dataclasses.asdict(bench.material)
    cfg = RunConfig(benchmark=name, refine=refine, case=kw.get("case", case), material=mat,
                    p_ref=d.pop("p_ref"), dkappa0=d.pop("dkappa0"),
                    out_dir=out or f"{name}-out", snapshot_every=snapshot_every)
    cfg.target_pressure = pressure if pressure is not None else d.pop("target_pressure", None)
    d.pop("target_pressure", None)
    stretches = d.pop("stretch", None)
    if stretch is not None:
        cfg.target_stretch = stretch
    elif stretches is not None and pressure is None:
        cfg.target_stretch = stretches[cfg.case]
    for key in ("n_eigs", "branching", "beta", "branch_steps"):
        if key in d:
            cfg.stability[key] = d.pop(key)
    cfg.solver.update(d)
    if max_steps is not None:
        cfg.solver["max_steps"] = max_steps
    return cfg


def mesh_info(path: str) -> str:
    """Text summary of a control mesh file or a generated example mesh."""
    if not os.path.exists(path) and ALIASES.get(path, path) in BENCHMARKS:
        mesh = generate_benchmark_mesh(ALIASES.get(path, path), 0).mesh
    else:
        mesh = load_control_mesh(path)
    val, cnt = np.unique(mesh.valence, return_counts=True)
    ext = sum(mesh.is_extraordinary(v) for v in range(mesh.n_vertices))
    lines = [
        f"vertices            {mesh.n_vertices}",
        f"faces               {mesh.n_faces}",
        f"edges               {len(mesh.edges)}",
        f"boundary edges      {len(mesh.boundary_edges)}",
        f"mirror edges        {len(mesh.mirror_axes)}",
        f"closed              {mesh.is_closed}",
        f"extraordinary       {ext}",
        f"needs subdivision   {needs_presubdivision(mesh)}",
        "valence histogram   " + ", ".join(f"{v}:{c}" for v, c in zip(val, cnt)),
    ]
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    lines.append("bounding box        " + " x ".join(f"[{a:.6g}, {b:.6g}]" for a, b in zip(lo, hi)))
    return "\n".join(lines)


def _parser():
    p = argparse.ArgumentParser(prog="shellpath", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log every step")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="run a standard example")
    b.add_argument("name", help=f"one of {', '.join(BENCHMARKS)} (or 'sphere')")
    b.add_argument("--refine", type=int, default=0)
    b.add_argument("--case", type=int, default=1, choices=(1, 2))
    b.add_argument("--pressure", type=float, default=None, help="target pressure")
    b.add_argument("--stretch", type=float, default=None, help="target balloon stretch (sphere only)")
    b.add_argument("--max-steps", type=int, default=None)
    b.add_argument("--snapshot-every", type=int, default=10)
    b.add_argument("--out", default=None, help="output directory")

    r = sub.add_parser("run", help="run a configured analysis")
    r.add_argument("--config", required=True)
    r.add_argument("--out", default=None, help="override output.dir")

    m = sub.add_parser("mesh-info", help="summarise a control mesh")
    m.add_argument("path")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "mesh-info":
            print(mesh_info(args.path))
            return 0
        if args.command == "bench":
            cfg = bench_config(args.name, args.refine, args.case, args.pressure, args.out, args.stretch,
                               args.max_steps, args.snapshot_every)
        else:
            cfg = load_config(args.config)
            if args.out:
                cfg.out_dir = args.out
        return run(cfg, argv if argv is not None else sys.argv[1:])
    except ConfigError as exc:
        print(f"shellpath: config error: {exc}", file=sys.stderr)
        return 2
    except (MeshError, OSError) as exc:
        print(f"shellpath: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
