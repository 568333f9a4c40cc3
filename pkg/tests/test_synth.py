import math
import struct

import numpy as np
import pytest

from nfradar import RadarConfig, Scene, TargetState
from nfradar.estimate import compensate
from nfradar.synth import (approximation_error, conventional_steering, empirical_snr_db,
                           exact_steering, load_cube, migration_tensors_ula, noise_variance,
                           phase_discrepancy, phase_terms, save_cube, separated_steering,
                           signal_cube, steering_tensor, synthesize, taylor_residual, zbar)

from conftest import noiseless

TH40 = math.radians(40.0)


def test_conventional_zero_is_ones(small_cfg):
    e = conventional_steering(small_cfg, 0.0, 0.0, 0.0).tensor
    assert np.array_equal(e, np.ones_like(e))


def test_conventional_unit_modulus_and_energy(small_cfg):
    e = conventional_steering(small_cfg, 37.3, -4.2, 0.6).tensor
    L, K, N = e.shape
    assert np.allclose(np.abs(e), 1.0, atol=1e-14)
    assert np.vdot(e, e).real == pytest.approx(L * K * N)


def test_conventional_outer_product(small_cfg):
    cfg = small_cfg
    r, v, th = 12.0, 0.7, -0.3
    lam, dr = cfg.wavelength, cfg.range_resolution
    eta3 = np.exp(1j * 2 * np.pi * math.sin(th) * cfg.sensor_positions / lam)
    eta2 = np.exp(-1j * 2 * np.pi * 2 * v / lam * cfg.slow_time_grid)
    eta1 = np.exp(-1j * 2 * np.pi * r / dr * cfg.fast_time_grid / cfg.chirp_duration_s)
    ref = eta3[:, None, None] * eta2[None, :, None] * eta1[None, None, :]
    e = conventional_steering(cfg, r, v, th).tensor
    assert np.allclose(e, ref, rtol=0, atol=1e-12)


def test_range_bin_one_cycle():
    cfg = RadarConfig(num_sensors_per_subarray=1, num_chirps=4, num_fast_samples=64)
    e = conventional_steering(cfg, cfg.range_resolution, 0.0, 0.0).tensor[0, 0]
    ph = np.unwrap(np.angle(e))
    assert abs(ph[-1] - ph[0]) * 64 / 63 == pytest.approx(2 * np.pi)
    assert np.argmax(np.abs(np.fft.ifft(e))) == 1


def test_migration_stationary_is_ones(small_cfg):
    s = migration_tensors_ula(small_cfg, 20.0, 0.0, 0.0, 0.4)
    assert np.allclose(s.b_tensor, 1) and np.allclose(s.z_tensor, 1)


def test_z_sign_flip(small_cfg):
    a = migration_tensors_ula(small_cfg, 20.0, 1.0, 3.0, 0.4).z_tensor
    b = migration_tensors_ula(small_cfg, 20.0, 1.0, -3.0, 0.4).z_tensor
    # quadratic part is common, sensor-dependent part is conjugated
    quad = a[0] * b[0] / np.abs(a[0] * b[0])
    lin_a = a / np.sqrt(quad)[None]
    lin_b = b / np.sqrt(quad)[None]
    assert np.allclose(lin_a, np.conj(lin_b), atol=1e-12)


def test_range_walk_span_ref():
    cfg = RadarConfig()
    walk = 20.0 * cfg.num_chirps * cfg.pri_s / cfg.range_resolution
    assert walk == pytest.approx(1.0 / (2.998e8 / 5e8), rel=1e-12)
    assert walk == pytest.approx(1.67, abs=0.01)
    terms = {t.name: t for t in phase_terms(cfg, (90.0, -20.0, 0.0, TH40), "ula_nearfield")}
    ph = terms["range_walk"].value     # (1, K, N)
    u_edge = cfg.fast_time_grid[-1] / cfg.chirp_duration_s
    span = (ph[0, 0, -1] - ph[0, -1, -1]) / (2 * np.pi * u_edge)
    assert abs(span) == pytest.approx(walk * (cfg.num_chirps - 1) / cfg.num_chirps, rel=1e-9)


def test_separated_zero_dbar_is_ula(small_cfg):
    psi = (25.0, -1.5, 4.0, 0.35)
    ula = steering_tensor(small_cfg, psi, "ula_nearfield")
    for q in (0, 1):
        sep = steering_tensor(small_cfg, psi, "separated", q)
        assert np.allclose(sep, ula, atol=1e-12)


def test_zbar_mirror_symmetry(small_sep):
    z0 = zbar(small_sep, 25.0, 4.0, 0.35, 0)
    z1 = zbar(small_sep, 25.0, -4.0, 0.35, 1)
    assert np.allclose(z0, z1, atol=1e-14)


def test_subarray_doppler_offset_ref():
    cfg = RadarConfig(subarray_separation_m=1.5)
    lam = cfg.wavelength
    T = cfg.slow_time_grid
    for q, expected in ((0, -0.0319), (1, 0.0319)):
        ph = np.unwrap(np.angle(zbar(cfg, 90.0, 10.0, TH40, q)))
        odd = (ph - ph[::-1]) / 2
        slope = np.polyfit(T, odd, 1)[0]
        # a +2 pi (2/lambda) dv T phase is a radial velocity offset of -dv
        assert slope / (2 * np.pi * 2 / lam) == pytest.approx(expected, abs=2e-4)
        assert slope / (2 * np.pi * 2 / lam) == pytest.approx(
            1.5 * (q - 0.5) * 10 * math.cos(TH40) / 180.0, rel=1e-6)


def test_separated_steering_energy(small_sep):
    for q in (0, 1):
        a = separated_steering(small_sep, (25.0, -1.5, 4.0, 0.35), q).vector
        assert np.vdot(a, a).real == pytest.approx(a.size)
    with pytest.raises(ValueError):
        separated_steering(small_sep, (25.0, 0, 0, 0), 2)


def test_nesting_ula_to_conventional():
    cfg = RadarConfig(num_sensors_per_subarray=8, num_chirps=64, num_fast_samples=32)
    psi = (40.0, 1e-4, 0.0, 0.3)
    a = steering_tensor(cfg, psi, "ula_nearfield")
    e = conventional_steering(cfg, *np.array(psi)[[0, 1, 3]]).tensor
    assert phase_discrepancy(a, e) < 1e-3


def test_pure_noise_variance():
    cfg = RadarConfig(num_sensors_per_subarray=4, num_chirps=256, num_fast_samples=128)
    cube = synthesize(Scene(cfg, [], snr_db=10.0), seed=3)
    s2 = noise_variance(cfg, 10.0)
    assert np.mean(np.abs(cube.samples) ** 2) == pytest.approx(s2, rel=0.05)


def test_stationary_conventional_equals_ula():
    cfg = RadarConfig(num_sensors_per_subarray=4, num_chirps=32, num_fast_samples=16)
    t = TargetState(30.0, 0.0, 0.0, 0.2, (1.0,))
    a = synthesize(noiseless(cfg, [t], mode="conventional")).samples
    b = synthesize(noiseless(cfg, [t], mode="ula_nearfield")).samples
    assert np.array_equal(a, b)


def test_snr_calibration():
    cfg = RadarConfig(num_sensors_per_subarray=8, num_chirps=1000, num_fast_samples=128,
                      subarray_separation_m=1.0)
    sc = Scene(cfg, [TargetState(60.0, -3.0, 5.0, 0.3)], snr_db=20.0)
    cube = synthesize(sc, seed=5, dtype=np.complex64)
    assert cube.noise_var == pytest.approx(2 * 8 * 1000 * 128 / 100)
    clean = signal_cube(sc, cube.amplitudes, np.complex64)
    assert empirical_snr_db(cube, clean) == pytest.approx(20.0, abs=0.2)


def test_determinism_and_coherent_flag(small_sep):
    sc = Scene(small_sep, [TargetState(20.0, 1.0, 2.0, 0.1)], snr_db=15.0, seed=9)
    a, b = synthesize(sc), synthesize(sc)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, synthesize(sc, seed=10).samples)
    amps = a.amplitudes[0]
    assert np.allclose(np.abs(amps), 1) and not np.isclose(amps[0], amps[1])
    coh = synthesize(sc.replace(coherent=True)).amplitudes[0]
    assert coh[0] == coh[1]


def test_compensation_restores_conventional(small_sep):
    psi = np.array([25.0, -1.5, 4.0, 0.35])
    t = TargetState(*psi)
    cube = synthesize(noiseless(small_sep, [t]))
    for q in (0, 1):
        y = compensate(cube.samples[q], small_sep, psi, q, "B_and_Z")
        e = conventional_steering(small_sep, psi[0], psi[1], psi[3]).tensor
        assert np.allclose(y, cube.amplitudes[0, q] * e, atol=1e-10)
        assert np.linalg.norm(y) == pytest.approx(np.linalg.norm(cube.samples[q]))


def test_cube_round_trip(tmp_path, small_sep):
    sc = Scene(small_sep, [TargetState(20.0, 1.0, 2.0, 0.1)], snr_db=15.0, seed=9)
    cube = synthesize(sc, dtype=np.complex64)
    path = tmp_path / "c.nfrc"
    save_cube(cube, path)
    raw = path.read_bytes()
    head = struct.unpack("<4sIIIIIBdQ", raw[:struct.calcsize("<4sIIIIIBdQ")])
    assert head[:6] == (b"NFRC", 1, 2, 4, 32, 16)
    assert head[7] == cube.noise_var and head[8] == 9
    back = load_cube(path)
    assert np.array_equal(back.samples, cube.samples)
    assert back.config == small_sep
    assert back.scene.targets[0].psi == pytest.approx(sc.targets[0].psi, rel=1e-14)
    assert np.allclose(back.amplitudes, cube.amplitudes)


def test_approximation_static_center():
    cfg = RadarConfig(num_sensors_per_subarray=1, num_chirps=64, num_fast_samples=32)
    rep = approximation_error(cfg, TargetState(50.0, 0.0, 0.0, 0.0))
    assert all(v == pytest.approx(0.0, abs=1e-12) for v in rep.terms.values())
    assert rep.taylor_residual_m == pytest.approx(0.0, abs=1e-12)


def test_fast_time_bound_ref():
    cfg = RadarConfig(subarray_separation_m=1.5)
    rep = approximation_error(cfg, TargetState(90.0, -20.0, 10.0, TH40))
    # BW (v KT)^2/(r c) + BW (v KT + D)^2/(r c), total extent D = 1.5 + 49 lambda/2
    D = 1.5 + 49 * (2.998e8 / 77e9) / 2
    ref = 250e6 * 0.5 ** 2 / (90 * 2.998e8) + 250e6 * (0.5 + D) ** 2 / (90 * 2.998e8)
    assert ref == pytest.approx(0.04302, abs=1e-4)
    assert rep.terms["fast_time/delay_curvature"] == pytest.approx(np.pi * ref, rel=1e-9)


def test_taylor_residual_ref():
    cfg = RadarConfig()
    tgt = TargetState(90.0, -20.0, 10.0, TH40)
    res = taylor_residual(cfg, tgt, cfg.observation_time / 2, cfg.aperture / 2)
    assert abs(res) < cfg.range_resolution / 100
    assert approximation_error(cfg, tgt).taylor_residual_m < cfg.range_resolution / 100


def test_exact_matches_approx_for_benign_target():
    cfg = RadarConfig(num_sensors_per_subarray=8, num_chirps=128, num_fast_samples=64)
    psi = (30.0, -0.5, 1.0, 0.3)
    a = steering_tensor(cfg, psi, "ula_full")
    e = exact_steering(cfg, psi)
    assert phase_discrepancy(e, a) < 0.05


@pytest.mark.parametrize("dbar,psi", [(0.0, (40.0, 1.0, -2.0, 0.9)), (0.3, (25.0, -3.0, 4.0, -0.5)),
                                      (0.0, (30.0, 6.0, 1.0, 0.2))])
def test_bounds_cover_exact_discrepancy(dbar, psi):
    cfg = RadarConfig(num_sensors_per_subarray=16, num_chirps=128, num_fast_samples=64, pri_s=2e-4,
                      subarray_separation_m=dbar)
    tgt = TargetState(*psi)
    rep = approximation_error(cfg, tgt)
    for q in range(cfg.num_subarrays):
        a = steering_tensor(cfg, psi, None, q)
        worst = phase_discrepancy(exact_steering(cfg, psi, q), a)
        assert worst <= sum(rep.terms.values())
        no_rvp = phase_discrepancy(exact_steering(cfg, psi, q, include_rvp=False), a)
        assert no_rvp <= sum(v for k, v in rep.terms.items() if not k.startswith("rvp/"))
