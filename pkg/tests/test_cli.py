import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from nfradar import RadarConfig, Scene, TargetState, __version__
from nfradar.cli import EXIT_INVALID, EXIT_OK, EXIT_SHORTFALL, config_hash, main, parse_grid, parse_pad
from nfradar.scenario import save_scene
from nfradar.synth import load_cube

CFG = RadarConfig(num_sensors_per_subarray=8, num_chirps=256, num_fast_samples=64, pri_s=1e-4,
                  subarray_separation_m=0.8)
TGT = TargetState(20.0, -2.0, 6.0, 0.3)


@pytest.fixture
def scene_file(tmp_path):
    sc = Scene(CFG, [TGT, TargetState(32.0, 1.5, -4.0, -0.4)], snr_db=35.0, seed=3)
    path = tmp_path / "scene.json"
    save_scene(sc, path)
    return sc, str(path)


def _manifest(d):
    return json.loads((d / "manifest.json").read_text())


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_parse_helpers():
    assert parse_grid("18:22:3") == [18.0, 20.0, 22.0]
    assert parse_grid("1, 2,3") == [1.0, 2.0, 3.0]
    assert parse_pad("4,4,8") == (4, 4, 8)
    for bad in ("4,4", "0,1,1", "a,b,c"):
        with pytest.raises(ValueError):
            parse_pad(bad)
    with pytest.raises(ValueError):
        parse_grid("1:2")


def test_check_writes_manifest(scene_file, tmp_path, capsys):
    sc, path = scene_file
    out = tmp_path / "check"
    assert main(["check", path, "--out", str(out)]) == EXIT_OK
    m = _manifest(out)
    assert m["command"] == "check" and m["version"] == __version__
    assert m["config_hash"] == config_hash(sc) and m["seed"] == 3
    assert set(m["files"]) == {"assumptions.csv", "scene.json"}
    assert {r["name"] for r in _rows(out / "assumptions.csv")} >= {"A1", "A12"}
    assert "A11" in capsys.readouterr().out


def test_synth_then_estimate_from_cube(scene_file, tmp_path):
    sc, path = scene_file
    d = tmp_path / "synth"
    assert main(["synth", path, "--out", str(d), "--seed", "7"]) == EXIT_OK
    cube = load_cube(d / "cube.nfrc")
    assert cube.samples.shape == (2, 8, 256, 64) and cube.seed == 7
    # the SNR is per target, the empirical figure counts both
    snr = json.loads((d / "synth.json").read_text())["empirical_snr_db"]
    assert snr == pytest.approx(35.0 + 10 * np.log10(2), abs=0.5)
    e = tmp_path / "est"
    assert main(["estimate", path, "--out", str(e), "--cube", str(d / "cube.nfrc")]) == EXIT_OK
    rows = sorted(_rows(e / "estimates.csv"), key=lambda r: float(r["r"]))
    assert len(rows) == 2
    assert abs(float(rows[0]["v_theta"]) - 6.0) < 0.5
    assert abs(float(rows[1]["v_theta"]) + 4.0) < 0.5


def test_estimate_shortfall_exit_code(tmp_path):
    sc = Scene(CFG, [TGT], snr_db=30.0, seed=1)
    path = tmp_path / "one.json"
    save_scene(sc, path)
    code = main(["estimate", str(path), "--out", str(tmp_path / "e"), "--targets", "3"])
    assert code == EXIT_SHORTFALL
    assert json.loads((tmp_path / "e" / "estimates.json").read_text())["shortfall"]


def test_crb_and_af(scene_file, tmp_path):
    _, path = scene_file
    d = tmp_path / "crb"
    assert main(["crb", path, "--out", str(d), "--param", "dbar", "--grid", "0.2,0.8"]) == EXIT_OK
    rows = _rows(d / "crb.csv")
    assert len(rows) == 2 and float(rows[0]["numeric"]) > float(rows[1]["numeric"])
    a = tmp_path / "af"
    assert main(["af", path, "--out", str(a), "--kind", "vtheta", "--n-vtheta", "33"]) == EXIT_OK
    af = _rows(a / "af.csv")
    assert len(af) == 33 and max(float(r["magnitude_db"]) for r in af) <= 1e-9


def test_sweep_outputs(tmp_path):
    sc = Scene(CFG, [TGT], snr_db=25.0, seed=1)
    path = tmp_path / "s.json"
    save_scene(sc, path)
    d = tmp_path / "sw"
    assert main(["sweep", str(path), "--out", str(d), "--grid", "20,30", "--trials", "2"]) == EXIT_OK
    payload = json.loads((d / "sweep.json").read_text())
    assert "threshold_snr_db" in payload and len(payload["points"]) == 2
    assert "wall_clock_s" in _manifest(d) and "wall_clock" not in json.dumps(payload)


def test_demo_multitarget(scene_file, tmp_path):
    _, path = scene_file
    d = tmp_path / "demo"
    assert main(["demo-multitarget", path, "--out", str(d)]) == EXIT_OK
    maps = np.load(d / "maps.npz")
    assert "raw_q0" in maps and "velocity_t1" in maps
    assert len(_rows(d / "targets.csv")) == 2


def test_invalid_inputs(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"radar": {}, "targets": [{"range_m": -5}]}')
    assert main(["check", str(bad), "--out", str(tmp_path / "x")]) == EXIT_INVALID
    assert main(["check", str(tmp_path / "missing.json"), "--out", str(tmp_path / "y")]) == EXIT_INVALID
    empty = tmp_path / "empty.json"
    save_scene(Scene(CFG, [], snr_db=10.0), empty)
    assert main(["crb", str(empty), "--out", str(tmp_path / "z"), "--grid", "10"]) == EXIT_INVALID


def test_console_entry_point(scene_file, tmp_path):
    _, path = scene_file
    proc = subprocess.run([sys.executable, "-m", "nfradar.cli", "check", path, "--out", str(tmp_path / "c")],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and (tmp_path / "c" / "manifest.json").exists()
