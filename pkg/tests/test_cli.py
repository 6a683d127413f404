import io
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from shellpath import cli
from shellpath.benchmarks import generate_benchmark_mesh
from shellpath.continuation import StepRecord
from shellpath.mesh import load_control_mesh, write_control_mesh

GOOD = """\
[geometry]
benchmark = sphere
case = 2

[material]
model = mooney_rivlin
thickness = 0.1
c1 = 211250
c2 = 21125

[load]
p_ref = 422500
dkappa0 = 0.002
target_stretch = 1.2

[solver]
ds_max = 2.0

[stability]
n_eigs = 2

[output]
dir = out
snapshot_every = 2
"""


def test_config_round_trip():
    cfg = cli.parse_config(GOOD)
    assert cfg.benchmark == "sphere_octant" and cfg.case == 2
    assert cfg.material == {"model": "mooney_rivlin", "thickness": 0.1, "c1": 211250.0, "c2": 21125.0}
    assert cfg.solver == {"ds_max": 2.0}
    assert cfg.stability == {"n_eigs": 2}
    assert cfg.snapshot_every == 2 and cfg.target_stretch == 1.2


def _error(text):
    with pytest.raises(cli.ConfigError) as info:
        cli.parse_config(text)
    return str(info.value)


def test_missing_material_section_names_the_keys():
    text = GOOD.replace("[material]\nmodel = mooney_rivlin\nthickness = 0.1\nc1 = 211250\nc2 = 21125\n", "")
    msg = _error(text)
    assert "material.model" in msg and "material.thickness" in msg


def test_missing_material_key_is_named_with_line():
    msg = _error(GOOD.replace("c2 = 21125\n", ""))
    assert "material.c2" in msg and "line 5" in msg
    msg = _error(GOOD.replace("thickness = 0.1\n", ""))
    assert "material.thickness" in msg


def test_bad_value_reports_its_line():
    msg = _error(GOOD.replace("ds_max = 2.0", "ds_max = two"))
    assert msg.startswith("line 17:") and "solver.ds_max" in msg


def test_unknown_key_and_section():
    assert "line 17: unknown key solver.dsmax" in _error(GOOD.replace("ds_max", "dsmax"))
    assert "unknown section [loads]" in _error(GOOD.replace("[load]", "[loads]"))


def test_geometry_needs_one_source():
    assert "exactly one" in _error(GOOD.replace("benchmark = sphere\n", ""))
    assert "unknown benchmark" in _error(GOOD.replace("benchmark = sphere", "benchmark = cone"))


def test_invalid_material_values():
    assert "invalid material" in _error(GOOD.replace("thickness = 0.1", "thickness = -1"))
    assert "material.model" in _error(GOOD.replace("model = mooney_rivlin", "model = neo"))


def test_fix_tokens():
    assert cli._parse_fixes("3:0, 4:2=0.5") == [(3, 0, 0.0), (4, 2, 0.5)]
    with pytest.raises(ValueError):
        cli._parse_fixes("3")


def _rec(step, eigs=(1.0, 2.0)):
    return StepRecord(step, step % 2, 0.1 * step, 10.0 * step, 1.0 + step, 0.01 * step, eigs, 3, 1e-9)


def test_history_csv_round_trip(tmp_path):
    path = tmp_path / "history.csv"
    w = cli.HistoryWriter(path, 3)
    w(_rec(0))
    # rows are on disk before close
    assert len(path.read_text().splitlines()) == 3
    w(_rec(1, (0.5, -1.0, 2.0, 4.0)))
    w.close()
    lines = path.read_text().splitlines()
    assert lines[0] == cli.HISTORY_MAGIC
    assert lines[1] == "step,branch,kappa,pressure,volume,max_disp,eig1,eig2,eig3,newton_iters"
    h = cli.read_history(path)
    np.testing.assert_array_equal(h["step"], [0, 1])
    np.testing.assert_array_equal(h["branch"], [0, 1])
    np.testing.assert_allclose(h["pressure"], [0.0, 10.0])
    assert np.isnan(h["eig3"][0]) and h["eig3"][1] == 2.0
    assert h["kappa"][1] == 0.1


def test_history_reader_rejects_other_versions(tmp_path):
    path = tmp_path / "h.csv"
    path.write_text("# shellpath-history v0\nstep,branch\n")
    with pytest.raises(ValueError, match="expected header"):
        cli.read_history(path)
    path.write_text(cli.HISTORY_MAGIC + "\nstep,branch,kappa\n")
    with pytest.raises(ValueError, match="unexpected columns"):
        cli.read_history(path)


def _vtk_sections(path):
    text = Path(path).read_text().split("\n")
    out = {}
    for k, line in enumerate(text):
        head = line.split(" ")[0]
        if head in ("POINTS", "CELLS", "CELL_TYPES", "POINT_DATA", "CELL_DATA"):
            out[head] = int(line.split()[1])
        if head == "SCALARS":
            out.setdefault("scalars", []).append(line.split()[1])
    return out


@pytest.fixture(scope="module")
def sphere_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = cli.parse_config(GOOD.replace("dir = out", f"dir = {out}"))
    cfg.solver["max_steps"] = 3
    status = cli.run(cfg)
    return out, status


def test_run_writes_all_artifacts(sphere_run):
    out, status = sphere_run
    assert status == 0
    h = cli.read_history(out / "history.csv")
    assert list(h["step"]) == [0, 1, 2, 3]
    assert "eig2" in h and np.all(h["eig1"] > 0)
    meta = json.loads((out / "run.json").read_text())
    assert meta["status"] == "stopped" and meta["config"]["benchmark"] == "sphere_octant"
    assert meta["numpy"] == np.__version__ and meta["steps"] == 4
    compile((out / "plot_history.py").read_text(), "plot_history.py", "exec")
    mesh = load_control_mesh(str(out / "control_mesh.txt"))
    assert mesh.n_faces == 192


def test_snapshots_follow_cadence(sphere_run):
    out, _ = sphere_run
    h = cli.read_history(out / "history.csv")
    names = json.loads((out / "run.json").read_text())["snapshots"]
    for step, branch in zip(h["step"], h["branch"]):
        stem = f"step_b{branch}_{step:05d}"
        if step % 2 == 0 or step == h["step"][-1]:
            assert stem in names
            assert (out / "snapshots" / f"{stem}.vtk").exists()
            assert (out / "snapshots" / f"{stem}_control.vtk").exists()
        else:
            assert stem not in names


def test_snapshot_vtk_layout(sphere_run):
    out, _ = sphere_run
    s = _vtk_sections(out / "snapshots" / "step_b0_00002.vtk")
    # 192 faces sampled on a 5 x 5 grid, 16 quads per face
    assert s["POINTS"] == s["POINT_DATA"] == 192 * 25
    assert s["CELLS"] == s["CELL_TYPES"] == s["CELL_DATA"] == 192 * 16
    assert s["scalars"] == ["disp_magnitude", "u_z", "energy_density"]
    c = _vtk_sections(out / "snapshots" / "step_b0_00002_control.vtk")
    assert c["CELLS"] == 192
    # the reference snapshot has zero displacement
    text = (out / "snapshots" / "step_b0_00000.vtk").read_text()
    block = text.split("SCALARS disp_magnitude double 1\nLOOKUP_TABLE default\n")[1].split("SCALARS")[0]
    assert np.all(np.array(block.split(), dtype=float) == 0.0)


def test_solver_abort_flushes_partial_history(tmp_path):
    text = GOOD.replace("dir = out", f"dir = {tmp_path}").replace(
        "ds_max = 2.0", "ds_max = 2.0\nmax_iter = 1\ntol_rel = 1e-9\nmax_halvings = 1")
    status = cli.run(cli.parse_config(text))
    assert status == 1
    h = cli.read_history(tmp_path / "history.csv")
    assert list(h["step"]) == [0]
    meta = json.loads((tmp_path / "run.json").read_text())
    assert meta["status"] == "failed" and meta["message"]


def test_main_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text(GOOD.replace("thickness = 0.1\n", ""))
    assert cli.main(["run", "--config", str(bad)]) == 2
    assert "material.thickness" in capsys.readouterr().err
    assert cli.main(["run", "--config", str(tmp_path / "none.ini")]) == 2
    assert cli.main(["bench", "cone"]) == 2


def test_mesh_info(tmp_path):
    b = generate_benchmark_mesh("sphere_octant")
    path = tmp_path / "octant.txt"
    with open(path, "w") as fh:
        write_control_mesh(b.mesh, fh)
    info = cli.mesh_info(str(path))
    assert "faces               192" in info
    assert "closed              False" in info
    assert "extraordinary       1" in info
    assert "mirror edges        48" in info
    assert cli.main(["mesh-info", str(path)]) == 0


def test_bench_defaults():
    cfg = cli.bench_config("sphere", case=2)
    assert cfg.benchmark == "sphere_octant" and cfg.case == 2
    assert cfg.target_stretch == cli.BENCH_DEFAULTS["sphere_octant"]["stretch"][2]
    cfg = cli.bench_config("airbag", pressure=1000.0)
    assert cfg.target_pressure == 1000.0 and cfg.material["model"] == "stvk"
    t = cli.bench_config("torus")
    assert t.stability["branching"] and t.case == 2


@pytest.mark.parametrize("name", ["plate", "sphere_octant", "torus", "airbag"])
def test_generated_meshes_are_byte_identical_across_processes(name):
    code = (
        "import sys; from shellpath.benchmarks import generate_benchmark_mesh; "
        "from shellpath.mesh import write_control_mesh; "
        f"write_control_mesh(generate_benchmark_mesh({name!r}).mesh, sys.stdout)"
    )
    runs = [subprocess.run([sys.executable, "-c", code], capture_output=True, check=True).stdout
            for _ in range(2)]
    assert runs[0] == runs[1] and len(runs[0]) > 1000
    buf = io.StringIO()
    write_control_mesh(generate_benchmark_mesh(name).mesh, buf)
    assert buf.getvalue().encode() == runs[0]
