import json

import numpy as np
import pytest

from plateau import __version__, flow
from plateau.cli import EXIT_BLOWUP, EXIT_NOT_CONVERGED, EXIT_OK, EXIT_BAD_INPUT, main
from plateau.mmesh import read_mmm


def load(path):
    return json.loads(open(path).read())


@pytest.fixture
def ico(tmp_path):
    path = tmp_path / "ico.mmm"
    assert main(["gen", "icosphere", "--subdiv", "1", "-o", str(path)]) == EXIT_OK
    return path


@pytest.fixture
def bubble(tmp_path):
    path = tmp_path / "db.mmm"
    assert main(["gen", "double-bubble", "--subdiv", "8", "-o", str(path)]) == EXIT_OK
    return path


def test_gen_writes_mesh_and_sidecar(tmp_path, capsys):
    path = tmp_path / "db.mmm"
    assert main(["gen", "double-bubble", "--subdiv", "16", "-o", str(path)]) == EXIT_OK
    stats = json.loads(capsys.readouterr().out)
    assert read_mmm(path).n_faces == stats["faces"]
    assert stats["junction_edges"] == 16
    meta = load(f"{path}.json")
    assert meta["version"] == __version__
    assert meta["flags"]["subdiv"] == 16 and meta["flags"]["fill"] == 1.0


def test_gen_icosphere_and_strip(tmp_path):
    ico = tmp_path / "i.mmm"
    assert main(["gen", "icosphere", "--subdiv", "0", "-o", str(ico)]) == EXIT_OK
    assert read_mmm(ico).n_faces == 20
    strip = tmp_path / "t.mmm"
    assert main(["gen", "y-junction", "--angles", "90,90,180", "-o", str(strip)]) == EXIT_OK
    assert read_mmm(strip).fixed.any()


def test_gen_bad_input_exits_2(tmp_path):
    assert main(["gen", "double-bubble", "--subdiv", "4", "-o", str(tmp_path / "x.mmm")]) == EXIT_BAD_INPUT
    assert main(["gen", "y-junction", "--angles", "100,100,100", "-o", str(tmp_path / "y.mmm")]) == EXIT_BAD_INPUT


def test_unknown_choice_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["gen", "torus"])
    assert exc.value.code == 2


def test_simulate_converges(ico, tmp_path):
    prefix = tmp_path / "run"
    assert main(["simulate", str(ico), "-o", str(prefix)]) == EXIT_OK
    report = load(f"{prefix}.report.json")
    assert report["converged"] and report["max_volume_error"] <= 1e-9
    assert report["config"]["strategy"] == "averaged"
    assert read_mmm(f"{prefix}.final.mmm").n_faces == 80
    assert open(f"{prefix}.log.csv").readline().startswith("step,dt,maxDisp,rmsDeviationDeg,vol_1")


def test_simulate_not_converged_still_writes(bubble, tmp_path):
    prefix = tmp_path / "short"
    assert main(["simulate", str(bubble), "-o", str(prefix), "--max-steps", "2"]) == EXIT_NOT_CONVERGED
    report = load(f"{prefix}.report.json")
    assert not report["converged"] and report["steps"] == 2
    assert "rms_deviation_deg" in report


def test_simulate_blowup_exits_4(bubble, tmp_path, monkeypatch):
    monkeypatch.setattr(flow, "tension_velocities", lambda m, *a, **k: np.full((m.n_vertices, 3), 1e12))
    prefix = tmp_path / "boom"
    assert main(["simulate", str(bubble), "-o", str(prefix)]) == EXIT_BLOWUP
    assert load(f"{prefix}.report.json")["blowup"]["step"] == 1


def test_simulate_missing_file_exits_2(tmp_path):
    assert main(["simulate", str(tmp_path / "nope.mmm")]) == EXIT_BAD_INPUT


def test_simulate_bad_strategy_exits_2(ico):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", str(ico), "--strategy", "median"])
    assert exc.value.code == EXIT_BAD_INPUT


def test_config_file_and_precedence(ico, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"cfl": 0.2, "strategy": "constant:0.5", "max_steps": 7}))
    prefix = tmp_path / "c"
    main(["--config", str(cfg), "simulate", str(ico), "-o", str(prefix), "--cfl", "0.3"])
    conf = load(f"{prefix}.report.json")["config"]
    assert conf["cfl"] == 0.3
    assert conf["strategy"] == "constant:0.5"
    assert conf["max_steps"] == 7


def test_config_unknown_key_exits_2(ico, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"warp": 9}))
    assert main(["--config", str(cfg), "simulate", str(ico)]) == EXIT_BAD_INPUT


def test_perturb_stretch_identity_and_angles(tmp_path, capsys):
    src = tmp_path / "db.mmm"
    main(["gen", "double-bubble", "--subdiv", "16", "-o", str(src)])
    same = tmp_path / "same.mmm"
    assert main(["perturb", str(src), "stretch", "--factor", "1", "-o", str(same)]) == EXIT_OK
    assert same.read_bytes() == src.read_bytes()
    out = tmp_path / "s.mmm"
    capsys.readouterr()
    assert main(["perturb", str(src), "stretch", "--sheet", "1,0", "--factor", "2", "-o", str(out)]) == EXIT_OK
    assert "junction angles preserved" in capsys.readouterr().out
    assert load(f"{out}.json")["max_angle_change_deg"] < 1e-10


def test_perturb_jitter_hash_is_reproducible(bubble, tmp_path, capsys):
    hashes = []
    for name in ("a", "b"):
        capsys.readouterr()
        main(["perturb", str(bubble), "jitter", "--amp", "0.01", "--seed", "3", "-o", str(tmp_path / f"{name}.mmm")])
        hashes.append(capsys.readouterr().out.strip())
    assert hashes[0] == hashes[1] and len(hashes[0]) == 64


def test_perturb_missing_sheet_exits_2(bubble, tmp_path):
    assert main(["perturb", str(bubble), "stretch", "--sheet", "1,7", "-o", str(tmp_path / "x.mmm")]) == EXIT_BAD_INPUT


def test_measure(bubble, tmp_path, capsys):
    out = tmp_path / "m.json"
    assert main(["measure", str(bubble), "-o", str(out)]) == EXIT_OK
    data = load(out)
    assert data["junction_edges"] == 8 and set(data["volumes"]) == {"1", "2"}
    assert "junction_curvature" not in data
    assert main(["measure", str(bubble), "--full", "-o", str(out)]) == EXIT_OK
    table = load(out)["junction_curvature"]
    assert len(table) == 8 * 3 * 3
    assert {row["strategy"] for row in table} == {"naive", "constant:0.5", "averaged"}


def test_reproduce_sphere_oracle(tmp_path):
    assert main(["reproduce", "sphere-oracle", "--levels", "2,3,4", "--out-dir", str(tmp_path)]) == EXIT_OK
    lines = (tmp_path / "sphere_oracle.csv").read_text().splitlines()
    errs = [float(line.split(",")[1]) for line in lines[1:]]
    assert errs[0] > errs[1] > errs[2]
    assert load(tmp_path / "sphere_oracle.csv.json")["strictly_decreasing"]


def test_reproduce_table1_small(tmp_path):
    assert main(["reproduce", "table1", "--subdivisions", "8", "--out-dir", str(tmp_path)]) == EXIT_OK
    lines = (tmp_path / "table1.csv").read_text().splitlines()
    assert lines[0] == "subdivision,faces_initial,angular_deviation_deg" and len(lines) == 2
    meta = load(tmp_path / "table1.csv.json")
    assert meta["flags"]["disp_tol"] == 1e-4 and meta["config"]["cfl"] == 0.5
