"""Ambiguity functions of the near-field models.

The AF between hypotheses ``psi1`` and ``psi`` is
``a^H(psi1) a(psi) / (|a(psi1)| |a(psi)|)``. Because every phase term spans at
most two axes, the triple sum factorizes into per-chirp sums over sensors
and fast-time samples, which keeps full-size (L=50, K=2500, N=500)
evaluations cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scenario import RadarConfig, TargetState
from .synth import TWO_PI, model_for, phase_terms


@dataclass
class AfSurface:
    """Sampled ambiguity function.

    ``axes`` is a list of ``(name, values)`` pairs in array-axis order.
    ``values`` are complex (single array) or magnitudes (combined separated
    AF). ``components`` holds auxiliary arrays such as per-subarray AFs.
    """

    axes: list
    values: np.ndarray
    normalization: str = "unit self-correlation"
    components: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    def db(self, floor: float = -60.0) -> np.ndarray:
        with np.errstate(divide="ignore"):
            out = 20 * np.log10(self.magnitude)
        return np.maximum(out, floor)

    def axis(self, name: str) -> np.ndarray:
        for n, v in self.axes:
            if n == name:
                return v
        raise KeyError(name)


# ---------------------------------------------------------------------------
# general AF
# ---------------------------------------------------------------------------


def _normalized_sum(cfg: RadarConfig, dphi: list, chunk: int = 1 << 21) -> complex:
    """``(1/LKN) sum exp(j sum(dphi))`` for broadcastable phase arrays."""
    L, K, N = cfg.num_sensors_per_subarray, cfg.num_chirps, cfg.num_fast_samples
    kn = np.zeros((1, 1, 1))
    lk = np.zeros((1, 1, 1))
    ln_terms = []
    for v in dphi:
        if v.shape[0] == 1:
            kn = kn + v
        elif v.shape[2] == 1:
            lk = lk + v
        else:
            ln_terms.append(v)
    if not ln_terms:
        sn = np.exp(1j * np.broadcast_to(kn, (1, K, N))[0]).sum(axis=1)   # (K,)
        sl = np.exp(1j * np.broadcast_to(lk, (L, K, 1))[:, :, 0]).sum(axis=0)
        return complex(np.sum(sn * sl) / (L * K * N))
    total = 0j
    kc = max(1, chunk // (L * N))
    for k0 in range(0, K, kc):
        sl = slice(k0, min(K, k0 + kc))
        ph = sum((v[:, sl, :] if v.shape[1] != 1 else v) for v in [kn, lk] + ln_terms)
        ph = np.broadcast_to(ph, (L, sl.stop - sl.start, N))
        total += np.exp(1j * ph).sum()
    return complex(total / (L * K * N))


def steering_correlation(cfg: RadarConfig, psi1, psi, model: str | None = None, q: int = 0,
                         magnitude: bool = True):
    """Normalized ``a_q^H(psi1) a_q(psi)`` (magnitude by default)."""
    model = model_for(cfg, model)
    t1 = phase_terms(cfg, psi1, model, q)
    t0 = phase_terms(cfg, psi, model, q)
    val = _normalized_sum(cfg, [b.value - a.value for a, b in zip(t1, t0)])
    return abs(val) if magnitude else val


def af_exact(psi1, psi, cfg: RadarConfig, mode: str | None = None):
    """Exact AF. Complex for one array; noncoherent magnitude for two.

    For separated arrays the combined magnitude is
    ``sqrt((|AF_0|^2 + |AF_1|^2) / 2)``.
    """
    model = model_for(cfg, mode)
    if model != "separated":
        return steering_correlation(cfg, psi1, psi, model, 0, magnitude=False)
    per = [steering_correlation(cfg, psi1, psi, model, q, magnitude=False) for q in (0, 1)]
    return float(np.sqrt(0.5 * (abs(per[0]) ** 2 + abs(per[1]) ** 2)))


# ---------------------------------------------------------------------------
# closed-form cuts
# ---------------------------------------------------------------------------


def _dirichlet(x: np.ndarray, n: int) -> np.ndarray:
    """``(1/n) sum_m exp(j 2 pi x (m - (n-1)/2))`` (real for this centring)."""
    x = np.asarray(x, dtype=float)
    den = n * np.sin(np.pi * x)
    num = np.sin(np.pi * x * n)
    out = np.ones_like(x)
    mask = np.abs(den) > 1e-12 * n
    out[mask] = num[mask] / den[mask]
    # near integer x (grating lobes) use the limit sign
    bad = ~mask & (np.abs(np.round(x)) > 0)
    if np.any(bad):
        m = np.round(x[bad])
        out[bad] = np.cos(np.pi * m * (n - 1))
    return out


def spatial_smear(cfg: RadarConfig, r, theta, dv_theta, sinc: bool = False) -> np.ndarray:
    """Intra-array smear factor ``g_k`` for tangential offsets ``dv_theta``.

    Returns an array shaped ``dv_theta.shape + (K,)``: the normalized sensor
    sum of ``exp(j 2 pi dv cos(theta) d_l T_k / (r lambda))``. With
    ``sinc=True`` the large-array sinc approximation is used instead.
    """
    dv = np.asarray(dv_theta, dtype=float)[..., None]
    Tk = cfg.slow_time_grid
    L = cfg.num_sensors_per_subarray
    y = dv * np.cos(theta) * cfg.sensor_spacing * Tk / (r * cfg.wavelength)
    if sinc:
        return np.sinc(y * L)
    return _dirichlet(y, L)


def fast_time_smear(cfg: RadarConfig, dv_r) -> np.ndarray:
    """Normalized fast-time sum of the range-walk difference, ``dv_r.shape + (K,)``."""
    dv = np.asarray(dv_r, dtype=float)[..., None]
    x = -dv * cfg.slow_time_grid / cfg.range_resolution / cfg.num_fast_samples
    return _dirichlet(x, cfg.num_fast_samples)


def default_vtheta_grid(v_theta: float, n: int = 512) -> np.ndarray:
    span = 2 * abs(v_theta) + 5
    return np.linspace(-span, span, n)


def af_cut_vtheta_ula(cfg: RadarConfig, tgt: TargetState, vtheta_grid=None,
                      sinc: bool = False) -> AfSurface:
    """AF of the single-ULA near-field model along ``v_theta`` (other parameters true).

    ``AF(v1) = (1/K) sum_k g_k exp(j 2 pi (v1^2 - v^2) T_k^2 / (r lambda))``
    with the exact sensor sum ``g_k`` (or its sinc approximation). The sign
    convention matches :func:`af_exact` (hypothesis conjugated).
    """
    r, _, v, th = tgt.psi
    grid = default_vtheta_grid(v) if vtheta_grid is None else np.asarray(vtheta_grid, float)
    Tk = cfg.slow_time_grid
    g = spatial_smear(cfg, r, th, v - grid, sinc)                   # (G, K)
    quad = np.exp(1j * TWO_PI * (grid[:, None] ** 2 - v ** 2) * Tk ** 2 / (r * cfg.wavelength))
    vals = np.mean(g * quad, axis=1)
    return AfSurface([("v_theta", grid)], vals,
                     meta={"truth": tgt.psi.tolist(), "sinc": sinc})


def af_cut_vr_vtheta(cfg: RadarConfig, tgt: TargetState, vr_grid=None, vtheta_grid=None,
                     dbar: float | None = None) -> AfSurface:
    """AF over ``(v_r, v_theta)`` hypotheses for a separated array.

    Per subarray, ``AF_q = (1/K) sum_k F_k g_k exp(j dphi_k)`` where ``F_k``
    is the fast-time range-walk sum, ``g_k`` the sensor smear and ``dphi_k``
    the quadratic, Doppler and subarray-Doppler phase differences. The sum is
    a matrix product over ``k``. The combined magnitude is returned in
    ``values``; ``components`` holds ``AF_0``, ``AF_1`` and the two ridge
    lines ``dv_r = Dbar_q dv_theta cos(theta) / (2 r)`` (offsets relative to
    truth, ``dv = truth - hypothesis``).

    ``dbar`` overrides the config separation (``0`` collapses to the ULA).
    """
    r, v_r, v, th = tgt.psi
    lam = cfg.wavelength
    Dbar = cfg.subarray_separation_m if dbar is None else dbar
    vr_grid = (np.linspace(v_r - 1, v_r + 1, 256) if vr_grid is None
               else np.asarray(vr_grid, float))
    vt_grid = default_vtheta_grid(v) if vtheta_grid is None else np.asarray(vtheta_grid, float)
    Tk = cfg.slow_time_grid
    K = cfg.num_chirps
    dvr = v_r - vr_grid
    dvt = v - vt_grid
    left = fast_time_smear(cfg, dvr) * np.exp(-1j * TWO_PI * 2 * dvr[:, None] * Tk / lam)
    g = spatial_smear(cfg, r, th, dvt)
    quad = np.exp(1j * TWO_PI * (vt_grid[:, None] ** 2 - v ** 2) * Tk ** 2 / (r * lam))
    per = []
    for q in (0, 1):
        Dq = Dbar * (q - 0.5)
        sub = np.exp(1j * TWO_PI * Dq * dvt[:, None] * np.cos(th) * Tk / (r * lam))
        right = g * quad * sub                                     # (T, K)
        per.append(left @ right.T / K)                             # (R, T)
    comb = np.sqrt(0.5 * (np.abs(per[0]) ** 2 + np.abs(per[1]) ** 2))
    slopes = [Dbar * (q - 0.5) * np.cos(th) / (2 * r) for q in (0, 1)]
    return AfSurface([("v_r", vr_grid), ("v_theta", vt_grid)], comb,
                     normalization="noncoherent: sqrt(mean_q |AF_q|^2)",
                     components={"af0": per[0], "af1": per[1]},
                     meta={"truth": tgt.psi.tolist(), "dbar": Dbar, "ridge_slopes": slopes})


# ---------------------------------------------------------------------------
# surface diagnostics
# ---------------------------------------------------------------------------


def mirror_level_db(surface: AfSurface) -> float:
    """Combined level (dB) at the mirror hypothesis ``v_theta1 = -v_theta``.

    The maximum over the ``v_r`` axis (if any) of the column nearest to
    the mirrored tangential velocity.
    """
    v_true = surface.meta["truth"][2]
    vt = surface.axis("v_theta")
    j = int(np.argmin(np.abs(vt + v_true)))
    return float(20 * np.log10(surface.magnitude[..., j].max()))


def mirror_point_db(cfg: RadarConfig, tgt: TargetState, n_vr: int = 601) -> float:
    """Mirror level of the separated-array AF, searched over ``v_r`` near truth.

    The ``v_r`` window spans twice the larger ridge offset at the mirror
    plus one Doppler bin.
    """
    r, v_r, v, th = tgt.psi
    off = abs(cfg.subarray_separation_m * v * np.cos(th) / (2 * r))
    half = 2 * off + cfg.doppler_bin_mps
    surf = af_cut_vr_vtheta(cfg, tgt, np.linspace(v_r - half, v_r + half, n_vr), [-v])
    return float(20 * np.log10(surf.magnitude.max()))


def ridge_slope(surface: AfSurface, q: int, dvt_range=None, min_level: float = 0.3) -> float:
    """Least-squares slope ``d(dv_r)/d(dv_theta)`` of the sidelobe ridge of ``AF_q``.

    For each ``v_theta`` column the ``v_r`` argmax of ``|AF_q|`` is refined by
    parabolic interpolation and the points are fitted by a line through the
    origin. By default only the mirror region ``dv_theta`` in
    ``[1.5 v, 2.5 v]`` (for ``v > 0``) is used: away from it the quadratic
    slow-time phase splits the ridge. Columns whose peak is below
    ``min_level`` or on the grid edge are skipped.
    """
    r_true, vr_true, v_true, _ = surface.meta["truth"]
    vr = surface.axis("v_r")
    vt = surface.axis("v_theta")
    mag = np.abs(surface.components[f"af{q}"])
    dvt = v_true - vt
    if dvt_range is None:
        lo, hi = sorted((1.5 * v_true, 2.5 * v_true))
    else:
        lo, hi = dvt_range
    xs, ys = [], []
    step = vr[1] - vr[0]
    for j in range(vt.size):
        if not (lo <= dvt[j] <= hi):
            continue
        col = mag[:, j]
        i = int(np.argmax(col))
        if col[i] < min_level or i == 0 or i == col.size - 1:
            continue
        a, b, c = col[i - 1], col[i], col[i + 1]
        den = a - 2 * b + c
        off = 0.5 * (a - c) / den if den != 0 else 0.0
        xs.append(dvt[j])
        ys.append(vr_true - (vr[i] + off * step))
    xs, ys = np.asarray(xs), np.asarray(ys)
    if xs.size < 3:
        raise ValueError("too few ridge points for a slope fit")
    return float(np.dot(xs, ys) / np.dot(xs, xs))


def mainlobe_width(values: np.ndarray, grid: np.ndarray, center: float, level_db: float = -3.0) -> float:
    """Width of the contiguous region around ``center`` above ``level_db``."""
    mag = np.abs(values)
    mag = mag / mag.max()
    thr = 10 ** (level_db / 20)
    i0 = int(np.argmin(np.abs(grid - center)))
    lo = i0
    while lo > 0 and mag[lo - 1] >= thr:
        lo -= 1
    hi = i0
    while hi < mag.size - 1 and mag[hi + 1] >= thr:
        hi += 1
    return float(grid[hi] - grid[lo])
