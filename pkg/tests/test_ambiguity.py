import math

import numpy as np
import pytest

from nfradar import RadarConfig, Scene, TargetState
from nfradar.ambiguity import (af_cut_vr_vtheta, af_cut_vtheta_ula, af_exact, default_vtheta_grid,
                               mainlobe_width, mirror_point_db, spatial_smear, steering_correlation)
from nfradar.estimate import objective
from nfradar.synth import noise_variance, synthesize

TH40 = math.radians(40.0)
CFG = RadarConfig(num_sensors_per_subarray=8, num_chirps=400, num_fast_samples=32, pri_s=1e-4)
TGT = TargetState(40.0, -2.0, 6.0, 0.5)


def test_self_correlation_is_one():
    assert af_exact(TGT.psi, TGT.psi, CFG) == pytest.approx(1.0, abs=1e-12)
    sep = CFG.replace(subarray_separation_m=0.8)
    assert af_exact(TGT.psi, TGT.psi, sep) == pytest.approx(1.0, abs=1e-12)


def test_separated_combination_bounded():
    sep = CFG.replace(subarray_separation_m=0.8)
    rng = np.random.default_rng(1)
    for _ in range(10):
        psi1 = TGT.psi + rng.normal(0, [0.2, 0.05, 2.0, 0.01])
        per = [steering_correlation(sep, psi1, TGT.psi, q=q) for q in (0, 1)]
        comb = af_exact(psi1, TGT.psi, sep)
        assert max(per) <= 1 + 1e-12
        assert comb == pytest.approx(math.sqrt((per[0] ** 2 + per[1] ** 2) / 2))
        assert comb <= 1 + 1e-12


def test_ula_cut_matches_exact():
    grid = np.linspace(-15, 15, 41)
    cut = af_cut_vtheta_ula(CFG, TGT, grid)
    assert np.abs(cut.values).max() <= 1 + 1e-12
    for v1, val in zip(grid, cut.values):
        psi1 = TGT.psi.copy()
        psi1[2] = v1
        assert abs(af_exact(psi1, TGT.psi, CFG, "ula_nearfield") - val) < 1e-10


def test_ula_cut_true_point_and_mirror():
    cut = af_cut_vtheta_ula(CFG, TGT, [6.0, -6.0])
    assert cut.values[0] == pytest.approx(1.0, abs=1e-12)
    # at the mirror only the spatial smear of dv = -12 remains
    smear = spatial_smear(CFG, TGT.range_m, TGT.doa_rad, np.array([2 * 6.0]))
    assert abs(cut.values[1]) == pytest.approx(abs(np.mean(smear)), rel=1e-10)


def test_sinc_approximation():
    cfg = RadarConfig()
    tgt = TargetState(90.0, -20.0, 10.0, TH40)
    grid = default_vtheta_grid(10.0)
    assert grid.size == 512 and grid[0] == -25 and grid[-1] == 25
    exact = af_cut_vtheta_ula(cfg, tgt, grid)
    approx = af_cut_vtheta_ula(cfg, tgt, grid, sinc=True)
    assert np.abs(exact.values - approx.values).max() < 0.02


def test_vr_vtheta_zero_dbar_collapses_to_ula():
    tgt = TGT
    vt = np.linspace(-10, 10, 21)
    surf = af_cut_vr_vtheta(CFG, tgt, [tgt.radial_velocity_mps], vt, dbar=0.0)
    ula = af_cut_vtheta_ula(CFG, tgt, vt)
    assert np.allclose(surf.values[0], np.abs(ula.values), atol=1e-12)


def test_vr_vtheta_matches_exact():
    sep = CFG.replace(subarray_separation_m=0.8)
    vr = TGT.radial_velocity_mps + np.linspace(-0.2, 0.2, 5)
    vt = np.linspace(-12, 12, 7)
    surf = af_cut_vr_vtheta(sep, TGT, vr, vt)
    assert surf.values.max() <= 1 + 1e-12
    for i, a in enumerate(vr):
        for j, b in enumerate(vt):
            psi1 = np.array([TGT.range_m, a, b, TGT.doa_rad])
            assert surf.values[i, j] == pytest.approx(af_exact(psi1, TGT.psi, sep), abs=1e-10)
    slopes = surf.meta["ridge_slopes"]
    assert slopes == pytest.approx([0.8 * (q - 0.5) * math.cos(0.5) / 80.0 for q in (0, 1)])


def test_sign_flip_symmetry():
    sep = CFG.replace(subarray_separation_m=0.8)
    a = TGT.psi.copy()
    psi1 = a + [0.05, 0.01, -3.0, 0.002]
    flip = lambda p: np.array([p[0], p[1], -p[2], -p[3]])
    assert af_exact(psi1, a, sep) == pytest.approx(af_exact(flip(psi1), flip(a), sep), abs=1e-12)


def test_loglikelihood_link():
    sep = CFG.replace(subarray_separation_m=0.8)
    tgt = TGT.replace(amplitudes=(1.0, 1j))
    cube = synthesize(Scene(sep, [tgt], snr_db=np.inf))
    snr_db = 17.0
    snr = 10 ** (snr_db / 10)
    s2 = noise_variance(sep, snr_db)
    for dv in (0.0, 2.0, -5.0):
        psi1 = tgt.psi + [0.1, 0.02, dv, 0.01]
        val = objective(cube, sep, psi1) / s2
        assert val == pytest.approx(snr * af_exact(psi1, tgt.psi, sep) ** 2, rel=1e-9)


def test_mainlobe_narrows_with_dbar():
    cfg = RadarConfig(num_sensors_per_subarray=8, num_chirps=2500, num_fast_samples=32)
    tgt = TargetState(90.0, -20.0, 10.0, TH40)
    vt = np.linspace(-15, 35, 1001)
    widths = []
    for d in (0.1, 0.5, 1.0, 1.5):
        s = af_cut_vr_vtheta(cfg.replace(subarray_separation_m=d), tgt, [-20.0], vt)
        widths.append(mainlobe_width(s.values[0], vt, 10.0))
    assert all(a > b for a, b in zip(widths, widths[1:]))


def test_mirror_point_small_dbar_not_suppressed():
    cfg = RadarConfig(num_sensors_per_subarray=8, num_chirps=2500, num_fast_samples=32)
    tgt = TargetState(90.0, -20.0, 10.0, TH40)
    assert mirror_point_db(cfg.replace(subarray_separation_m=0.1), tgt) > -1.0
    assert mirror_point_db(cfg.replace(subarray_separation_m=1.5), tgt) == pytest.approx(-3.0, abs=0.5)


def test_db_floor():
    s = af_cut_vtheta_ula(CFG, TGT, np.linspace(-40, 40, 101) + 0.4)
    assert s.db().min() >= -60.0 and s.db().max() == pytest.approx(0.0, abs=1e-6)
