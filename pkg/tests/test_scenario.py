import json
import math

import numpy as np
import pytest

from nfradar import (ConfigurationError, RadarConfig, Scene, TargetState, check_assumptions,
                     derive_geometry, derive_params, load_scene)
from nfradar.scenario import cartesian_velocity, save_scene

C = 2.998e8


def test_derive_geometry_trivial():
    assert derive_geometry(0.0, 0.0, 0.7) == pytest.approx((0.0, 0.0))
    assert derive_geometry(5.0, 0.0, 0.0) == pytest.approx((0.0, 5.0))


def test_cartesian_inverse_ref_target():
    # rotation inverse written out by hand
    th = math.radians(40.0)
    vx = -20.0 * math.sin(th) + 10.0 * math.cos(th)
    vy = -20.0 * math.cos(th) - 10.0 * math.sin(th)
    assert (vx, vy) == pytest.approx((-5.196, -21.749), abs=1e-3)
    assert cartesian_velocity(-20.0, 10.0, th) == pytest.approx((vx, vy), rel=1e-12)


@pytest.mark.parametrize("deg", [-89.0, -40.0, 0.0, 13.0, 89.0])
def test_geometry_round_trip(deg):
    rng = np.random.default_rng(int(deg) + 100)
    th = math.radians(deg)
    for vx, vy in rng.normal(0, 20, size=(20, 2)):
        back = cartesian_velocity(*derive_geometry(vx, vy, th), th)
        assert back == pytest.approx((vx, vy), rel=1e-12, abs=1e-12)


def test_derived_params_values():
    cfg = RadarConfig()
    tgt = TargetState(90.0, 0.0, 10.0, 0.3)
    p = derive_params(cfg, tgt)
    assert p.range_resolution_m == pytest.approx(C / 2 / 250e6)
    assert p.range_resolution_m == pytest.approx(0.6, rel=1e-3)
    assert p.nfsa_m == pytest.approx(0.5)
    assert p.wavelength_m == pytest.approx(C / 77e9)
    assert p.wavelength_m == pytest.approx(3.896e-3, rel=1e-3)
    assert p.range_ambiguity_m == pytest.approx(C * 2e-6 / 2)
    assert p.chirp_slope * cfg.chirp_duration_s == pytest.approx(cfg.bandwidth_hz)
    assert p.slow_time_grid.shape == (2500,) and p.fast_time_grid.shape == (500,)


def test_centered_grids(small_cfg):
    assert small_cfg.slow_time_grid.sum() == 0.0
    assert small_cfg.fast_time_grid.sum() == 0.0
    assert abs(small_cfg.sensor_positions.sum()) < 1e-18
    cfg = RadarConfig(num_sensors_per_subarray=7)
    assert abs(cfg.sensor_positions.sum()) < 1e-18


@pytest.mark.parametrize("bad", [
    dict(chirp_duration_s=30e-6),
    dict(bandwidth_hz=0.0),
    dict(num_chirps=0),
    dict(num_sensors_per_subarray=0),
    dict(subarray_separation_m=-1.0),
])
def test_invalid_config(bad):
    with pytest.raises(ConfigurationError):
        RadarConfig(**bad)


def test_invalid_target():
    with pytest.raises(ConfigurationError):
        TargetState(-1.0)
    with pytest.raises(ConfigurationError):
        TargetState(10.0, doa_rad=math.pi / 2)
    with pytest.raises(ConfigurationError):
        TargetState(10.0, radial_velocity_mps=np.nan)


def test_speed_consistent_with_cartesian():
    t = TargetState.from_cartesian(50.0, 0.4, 3.0, -4.0)
    assert t.speed == pytest.approx(5.0)
    assert t.velocity_xy == pytest.approx((3.0, -4.0))


def test_a3_ratio_default_aperture():
    cfg = RadarConfig(subarray_aperture_m=0.1)
    rep = check_assumptions(cfg, TargetState(90.0, -20.0, 10.0, math.radians(40)))
    lam = C / 77e9
    assert rep["A3"].ratio == pytest.approx(0.01 / (lam * 90.0))
    assert rep["A3"].ratio == pytest.approx(0.0285, abs=5e-4)
    assert rep["A3"].status == "pass"


def test_a11_threshold_ref():
    # 5 NFSA^2 / (2 dr) with NFSA = 0.5 m
    rep = check_assumptions(RadarConfig(), TargetState(90.0, -20.0, 10.0, math.radians(40)))
    assert rep["A11"].ratio * 90.0 == pytest.approx(1.042, abs=2e-3)
    assert rep["A11"].status == "pass"


def test_zero_nfsa_passes_a4_a11():
    rep = check_assumptions(RadarConfig(), TargetState(60.0, 5.0, 0.0, 0.2))
    assert rep["A4"].ratio == 0.0 and rep["A11"].ratio == 0.0
    assert rep["A4"].status == "pass" and rep["A11"].status == "pass"


def test_report_structure_and_a12():
    cfg = RadarConfig(num_sensors_per_subarray=4, num_chirps=64, num_fast_samples=32)
    t1 = TargetState(40.0, 1.0, 2.0, 0.1)
    rep = check_assumptions(cfg, t1)
    assert [e.name for e in rep.entries] == [f"A{i}" for i in range(1, 13)]
    assert all(e.ratio is None or e.ratio >= 0 for e in rep.entries)
    assert rep["A12"].status == "not evaluated"
    far = TargetState(10.0, -8.0, 0.0, -0.5)
    rep2 = check_assumptions(cfg, t1, [t1, far])
    assert rep2["A12"].ratio is not None and rep2["A12"].ratio < 0.1
    same = check_assumptions(cfg, t1, [t1, t1])
    assert same["A12"].ratio == pytest.approx(1.0)
    assert same["A12"].status == "warn"


def test_margin_is_configurable():
    tgt = TargetState(90.0, -20.0, 10.0, math.radians(40))
    assert check_assumptions(RadarConfig(), tgt, margin=10)["A8"].status == "pass"
    assert check_assumptions(RadarConfig(), tgt, margin=1000)["A8"].status == "warn"


def test_scene_json_round_trip(tmp_path):
    cfg = RadarConfig(num_chirps=64, subarray_separation_m=1.0)
    sc = Scene(cfg, [TargetState(30.0, 1.0, -2.0, 0.2, (1 + 1j, 0.5))], snr_db=17.0, seed=4)
    path = tmp_path / "s.json"
    save_scene(sc, path)
    back = load_scene(path)
    assert back.config == sc.config and back.snr_db == 17.0 and back.seed == 4
    assert back.resolved_mode == sc.resolved_mode == "separated"
    assert back.targets[0].psi == pytest.approx(sc.targets[0].psi, rel=1e-14)
    assert back.targets[0].amplitudes == sc.targets[0].amplitudes
    data = json.loads(path.read_text())
    assert data["targets"][0]["doa_deg"] == pytest.approx(math.degrees(0.2))


def test_scene_cartesian_targets():
    d = {"radar": {"num_chirps": 64}, "targets": [{"range_m": 20, "doa_deg": 30,
                                                   "vx_mps": 1.0, "vy_mps": 2.0}]}
    t = Scene.from_dict(d).targets[0]
    assert t.velocity_xy == pytest.approx((1.0, 2.0))


def test_scene_validation():
    with pytest.raises(ConfigurationError):
        Scene(RadarConfig(), [], snr_db=np.nan)
    with pytest.raises(ConfigurationError):
        Scene(RadarConfig(), [], mode="separated")
    with pytest.raises(ConfigurationError):
        Scene(RadarConfig(subarray_separation_m=1.0), [], mode="ula_nearfield")
    with pytest.raises(ConfigurationError):
        Scene.from_dict({"radar": {}, "targets": [{"range_m": 5}], "bogus": 1})
    with pytest.raises(ConfigurationError):
        Scene.from_dict({"radar": {}, "targets": [{"range_m": 5}]})
