"""Maximum-likelihood estimation: conventional 3-D FFT search and the
iterative tangential-velocity estimator (single and multi-target).

Conventions
-----------
Per-subarray data are ``(L, K, N)`` arrays (sensor, chirp, fast time).
Likelihood maps are stored in the same axis order with physical axes
``sin_theta``, ``v_r`` and ``r``, each sorted ascending. All objectives are
normalized by ``L K N`` so a noiseless unit-gain target peaks at ``L K N``
times ``|AF|^2``.

The padded 3-D grid is never materialized in full: the unpadded FFT
locates the coarse cell and the padded grid is then evaluated locally by
separable DFT contractions, which gives the same argmax at a fraction of
the memory.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy import ndimage

from .scenario import ConfigurationError, RadarConfig
from .synth import TWO_PI, DataCube, apply_factors, phase_factors, phase_terms, select

DEFAULT_PAD = (4, 4, 8)          # range, Doppler, angle


class EstimationError(ValueError):
    """Raised for inputs the estimator cannot process (e.g. an all-zero cube)."""


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------


@dataclass
class LikelihoodMap:
    """Conventional objective sampled on an FFT grid.

    ``values`` has shape ``(pad_a L, pad_d K, pad_r N)``; ``axes`` maps
    ``"sin_theta"``, ``"v_r"`` and ``"r"`` to the physical value of each
    index. ``combined`` is True for noncoherent sums over subarrays.
    """

    values: np.ndarray
    axes: dict
    pad: tuple
    combined: bool = False

    def physical(self, index) -> tuple[float, float, float]:
        """``(sin_theta, v_r, r)`` at an integer index triple."""
        i, j, k = index
        return (float(self.axes["sin_theta"][i]), float(self.axes["v_r"][j]),
                float(self.axes["r"][k]))

    def index_of(self, sin_theta, v_r, r) -> tuple[int, int, int]:
        """Nearest grid index of a physical point (inverse of :meth:`physical`)."""
        out = []
        for name, val in (("sin_theta", sin_theta), ("v_r", v_r), ("r", r)):
            ax = self.axes[name]
            step = ax[1] - ax[0] if ax.size > 1 else 1.0
            out.append(int(np.clip(np.round((val - ax[0]) / step), 0, ax.size - 1)))
        return tuple(out)

    def argmax(self) -> tuple[int, int, int]:
        return tuple(int(i) for i in np.unravel_index(np.argmax(self.values), self.values.shape))


@dataclass
class EstimationResult:
    """Estimate of ``psi = [r, v_r, v_theta, theta]`` for one target.

    ``trace`` holds the tangential velocity after triangulation followed by
    one entry per iteration; ``objective_trace`` is the noncoherent
    objective at the estimate after each iteration.
    """

    psi: np.ndarray
    trace: list
    iterations: int
    converged: bool
    objective: float
    per_subarray: list = field(default_factory=list)
    objective_trace: list = field(default_factory=list)
    ambiguous: bool = False
    sign_margin_db: float = float("nan")
    flags: list = field(default_factory=list)

    @property
    def r(self) -> float:
        return float(self.psi[0])

    @property
    def v_r(self) -> float:
        return float(self.psi[1])

    @property
    def v_theta(self) -> float:
        return float(self.psi[2])

    @property
    def theta(self) -> float:
        return float(self.psi[3])

    def to_dict(self) -> dict:
        return {"range_m": self.r, "radial_velocity_mps": self.v_r,
                "tangential_velocity_mps": self.v_theta, "doa_rad": self.theta,
                "doa_deg": math.degrees(self.theta),
                "trace": [float(v) for v in self.trace], "iterations": self.iterations,
                "converged": self.converged, "objective": self.objective,
                "objective_trace": [float(v) for v in self.objective_trace],
                "per_subarray": self.per_subarray, "ambiguous": self.ambiguous,
                "sign_margin_db": None if not np.isfinite(self.sign_margin_db) else self.sign_margin_db,
                "flags": list(self.flags)}


@dataclass
class MultiTargetResult:
    """Output of :func:`estimate_multi`: results sorted by objective plus diagnostics."""

    results: list
    shortfall: bool = False
    peaks: list = field(default_factory=list)     # per subarray: list of (sin, v_r, r, value)
    pairs: list = field(default_factory=list)     # (i0, i1) index pairs, None if unpaired

    def __len__(self):
        return len(self.results)

    def __iter__(self):
        return iter(self.results)

    def __getitem__(self, i):
        return self.results[i]


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _as_subarrays(cube) -> list[np.ndarray]:
    if isinstance(cube, DataCube):
        return [cube.samples[q] for q in range(cube.num_subarrays)]
    if isinstance(cube, np.ndarray):
        if cube.ndim == 3:
            return [cube]
        if cube.ndim == 4:
            return [cube[q] for q in range(cube.shape[0])]
    if isinstance(cube, (list, tuple)):
        return [np.asarray(c) for c in cube]
    raise EstimationError("expected a DataCube, an (L,K,N)/(Q,L,K,N) array or a list of subarrays")


def _dq_list(cfg: RadarConfig, Q: int) -> list[float]:
    if Q == 2:
        return [cfg.subarray_separation_m * (q - 0.5) for q in (0, 1)]
    return [0.0]


def _bins(cfg: RadarConfig) -> tuple[float, float, float]:
    """Unpadded bin widths ``(sin_theta, v_r, r)``."""
    lam = cfg.wavelength
    return (lam / (cfg.sensor_spacing * cfg.num_sensors_per_subarray),
            lam / (2 * cfg.observation_time), cfg.range_resolution)


def _quad_offset(a, b, c) -> float:
    den = a - 2 * b + c
    if den >= 0:
        return 0.0
    return float(np.clip(0.5 * (a - c) / den, -0.5, 0.5))


def _clip_sin(s: float) -> float:
    return float(np.clip(s, -0.999999, 0.999999))


# ---------------------------------------------------------------------------
# conventional objective
# ---------------------------------------------------------------------------


def conventional_map(x, cfg: RadarConfig, pad=(1, 1, 1)) -> LikelihoodMap:
    """``|x^H e(r, v_r, theta)|^2 / (L K N)`` on the (padded) FFT grid.

    ``x`` is one ``(L, K, N)`` subarray or a list of them (noncoherent sum).
    ``pad`` gives the zero-padding factors for (range, Doppler, angle).
    """
    xs = _as_subarrays(x)
    L, K, N = xs[0].shape
    pr, pd, pa = (int(p) for p in pad)
    size = pa * L * pd * K * pr * N
    if size > 1 << 28:
        raise MemoryError(f"padded map would hold {size} cells; use a smaller pad")
    total = None
    for xq in xs:
        F = sfft.fft(xq, n=pa * L, axis=0)
        F = sfft.ifftn(F, s=(pd * K, pr * N), axes=(1, 2), norm="forward")
        F = sfft.fftshift(F, axes=(0, 1))
        P = (F.real ** 2 + F.imag ** 2) / (L * K * N)
        total = P if total is None else total + P
    lam = cfg.wavelength
    ia = np.arange(pa * L) - (pa * L) // 2
    idd = np.arange(pd * K) - (pd * K) // 2
    axes = {"sin_theta": ia / (pa * L) * lam / cfg.sensor_spacing,
            "v_r": idd / (pd * K) * lam / (2 * cfg.pri_s),
            "r": np.arange(pr * N) * cfg.range_resolution / pr}
    return LikelihoodMap(total, axes, (pr, pd, pa), combined=len(xs) > 1)


def _kernels(cfg: RadarConfig, s_grid, v_grid, r_grid, dtype):
    lam = cfg.wavelength
    u = cfg.fast_time_grid / cfg.chirp_duration_s
    R = np.exp(1j * TWO_PI * np.outer(u, r_grid) / cfg.range_resolution).astype(dtype)
    D = np.exp(1j * TWO_PI * np.outer(cfg.slow_time_grid, 2 * np.asarray(v_grid)) / lam).astype(dtype)
    A = np.exp(-1j * TWO_PI * np.outer(cfg.sensor_positions, s_grid) / lam).astype(dtype)
    return A, D, R


def evaluate_conventional(x, cfg: RadarConfig, s_grid, v_grid, r_grid) -> np.ndarray:
    """Noncoherent conventional objective on a rectangular ``(sin, v_r, r)`` grid."""
    xs = _as_subarrays(x)
    L, K, N = xs[0].shape
    dtype = np.result_type(xs[0].dtype, np.complex64)
    A, D, R = _kernels(cfg, np.atleast_1d(s_grid), np.atleast_1d(v_grid), np.atleast_1d(r_grid), dtype)
    out = 0.0
    for xq in xs:
        y = xq.reshape(L * K, N) @ R                       # (LK, nr)
        y = y.reshape(L, K, -1)
        y = np.einsum("lkr,kv->lvr", y, D, optimize=True)
        y = np.einsum("lvr,la->avr", y, A, optimize=True)
        out = out + (y.real ** 2 + y.imag ** 2)
    return np.asarray(out, dtype=float) / (L * K * N)


def _zoom(xs, cfg: RadarConfig, center, pad, interpolate: bool, max_moves: int = 6):
    """Local padded-grid maximization around ``center = (sin, v_r, r)``."""
    bins = _bins(cfg)
    steps = [bins[0] / pad[2], bins[1] / pad[1], bins[2] / pad[0]]
    half = [pad[2], pad[1], pad[0]]
    c = list(center)
    for _ in range(max_moves):
        grids = [c[i] + steps[i] * np.arange(-half[i], half[i] + 1) for i in range(3)]
        grids[0] = np.clip(grids[0], -0.999999, 0.999999)
        vals = evaluate_conventional(xs, cfg, *grids)
        idx = np.unravel_index(np.argmax(vals), vals.shape)
        edge = [idx[i] in (0, vals.shape[i] - 1) and vals.shape[i] > 1 for i in range(3)]
        c = [float(grids[i][idx[i]]) for i in range(3)]
        if not any(edge):
            break
    est = list(c)
    if interpolate:
        for i in range(3):
            if vals.shape[i] < 3 or idx[i] in (0, vals.shape[i] - 1):
                continue
            sl = list(idx)
            trio = []
            for o in (-1, 0, 1):
                sl[i] = idx[i] + o
                trio.append(vals[tuple(sl)])
            est[i] = c[i] + _quad_offset(*trio) * steps[i]
    return est, float(vals.max())


def ml_conventional(cube_q, cfg: RadarConfig, pad=DEFAULT_PAD, interpolate: bool = True):
    """Conventional ML estimate ``(r, v_r, theta, map)`` for one subarray.

    The argmax of the unpadded FFT map is refined on the ``pad``-times
    denser grid around it and, if ``interpolate``, by a 3-point quadratic
    fit per axis. ``pad=(1, 1, 1), interpolate=False`` returns the raw FFT
    bin.
    """
    xs = _as_subarrays(cube_q)
    if not any(np.any(x != 0) for x in xs):
        raise EstimationError("degenerate all-zero cube")
    lmap = conventional_map(xs, cfg)
    s, v, r = lmap.physical(lmap.argmax())
    if tuple(pad) != (1, 1, 1) or interpolate:
        (s, v, r), _ = _zoom(xs, cfg, (s, v, r), tuple(pad), interpolate)
    return r, v, math.asin(_clip_sin(s)), lmap


def refine_rvt(Y, cfg: RadarConfig, pad=DEFAULT_PAD, center=None, window=(3, 3, 3),
               interpolate: bool = True):
    """Noncoherent ``argmax sum_q |y_q^H e(r, v_r, theta)|^2``.

    Without ``center`` the global unpadded maximum seeds the padded search.
    With ``center = (r, v_r, theta)`` only a neighbourhood of
    ``window = (angle, Doppler, range)`` unpadded bins around it is searched,
    which is how multi-target refinement stays on its own target.
    Returns ``(r, v_r, theta)``.
    """
    xs = _as_subarrays(Y)
    if not any(np.any(x != 0) for x in xs):
        raise EstimationError("degenerate all-zero cube")
    if center is None:
        lmap = conventional_map(xs, cfg)
        s, v, r = lmap.physical(lmap.argmax())
    else:
        r0, v0, th0 = center
        bins = _bins(cfg)
        grids = [c + b * np.arange(-w, w + 1) for c, b, w in
                 zip((math.sin(th0), v0, r0), bins, window)]
        grids[0] = np.clip(grids[0], -0.999999, 0.999999)
        vals = evaluate_conventional(xs, cfg, *grids)
        idx = np.unravel_index(np.argmax(vals), vals.shape)
        s, v, r = (float(grids[i][idx[i]]) for i in range(3))
    (s, v, r), _ = _zoom(xs, cfg, (s, v, r), tuple(pad), interpolate)
    return r, v, math.asin(_clip_sin(s))


# ---------------------------------------------------------------------------
# single-target building blocks
# ---------------------------------------------------------------------------


def triangulate_vtheta(v_r0: float, v_r1: float, r: float, theta: float, dbar: float) -> float:
    """Initial tangential velocity from the Doppler split of two subarrays."""
    c = math.cos(theta)
    if dbar <= 0:
        raise EstimationError("triangulation needs a subarray separation > 0")
    if abs(c) < 1e-6:
        raise EstimationError("triangulation unavailable at endfire (cos(theta) ~ 0)")
    return 2.0 * r * (v_r0 - v_r1) / (dbar * c)


def compensate(cube_q, cfg: RadarConfig, psi, q: int = 0, which: str = "B_and_Z") -> np.ndarray:
    """Remove migration terms: ``X * conj(B_q(psi))`` (and ``* conj(Z_q(psi))``).

    The separated-model grouping is used (for a single ULA it reduces to a
    subarray centred at the origin), so the spatial Doppler term belongs to
    ``B``. The multiplier has unit modulus, hence the map is an isometry.
    """
    if which not in ("B_and_Z", "B_only"):
        raise ValueError("which must be 'B_and_Z' or 'B_only'")
    factors = ("B", "Z") if which == "B_and_Z" else ("B",)
    terms = select(phase_terms(cfg, psi, "separated", q), factors)
    return apply_factors(np.asarray(cube_q), phase_factors(terms, conj=True))


def extract_slow_time(xbar_q, cfg: RadarConfig, r: float, theta: float) -> np.ndarray:
    """``(1/LN) conj(eta3(theta)) x_1 Xbar x_3 conj(eta1(r))`` (length-K)."""
    L, K, N = xbar_q.shape
    lam = cfg.wavelength
    u = cfg.fast_time_grid / cfg.chirp_duration_s
    eta1c = np.exp(1j * TWO_PI * (r / cfg.range_resolution) * u)
    eta3c = np.exp(-1j * TWO_PI * math.sin(theta) * cfg.sensor_positions / lam)
    dtype = np.result_type(xbar_q.dtype, np.complex64)
    y = xbar_q.reshape(L * K, N) @ eta1c.astype(dtype)
    return (eta3c.astype(dtype) @ y.reshape(L, K)) / (L * N)


def zbar_grid(cfg: RadarConfig, r: float, theta: float, v_grid, dq: float) -> np.ndarray:
    """``zbar_q`` for every tangential velocity in ``v_grid``: shape ``(G, K)``."""
    Tk = cfg.slow_time_grid[None, :]
    v = np.asarray(v_grid, dtype=float)[:, None]
    rl = r * cfg.wavelength
    ph = -TWO_PI * v ** 2 * Tk ** 2 / rl + TWO_PI * dq * v * math.cos(theta) * Tk / rl
    return np.exp(1j * ph)


def _correlator(ybars, cfg, r, theta, dqs, vr_grid, vt_grid) -> np.ndarray:
    """``sum_q |(1/K) ybar_q^H (eta2(v_r) * zbar_q(v_theta))|^2`` on a grid, shape (T, R)."""
    K = cfg.num_chirps
    E = np.exp(1j * TWO_PI * 2 * np.outer(cfg.slow_time_grid, vr_grid) / cfg.wavelength)
    out = 0.0
    for y, dq in zip(ybars, dqs):
        W = np.conj(zbar_grid(cfg, r, theta, vt_grid, dq)) * y[None, :]
        c = W @ E / K
        out = out + (c.real ** 2 + c.imag ** 2)
    return np.asarray(out)


def mainlobe_vtheta(cfg: RadarConfig, r: float, theta: float, v_theta: float = 0.0,
                    dbar: float | None = None) -> float:
    """Approximate main-lobe width of the correlator along ``v_theta`` (m/s).

    The narrower of the subarray-Doppler width ``r lambda / (2 Dbar cos KT)``
    and the slow-time-curvature width ``r lambda / (2 max(|v|, 1) (KT)^2)``.
    """
    dbar = cfg.subarray_separation_m if dbar is None else dbar
    KT = cfg.observation_time
    lam = cfg.wavelength
    w_q = r * lam / (2 * max(abs(v_theta), 1.0) * KT ** 2)
    c = abs(math.cos(theta))
    w_d = r * lam / (2 * dbar * c * KT) if dbar > 0 and c > 0 else math.inf
    return min(w_q, w_d)


MAX_VT_POINTS = 4096
# triangulated starts beyond this (m/s) are treated as noise
V_INIT_LIMIT = 100.0


@dataclass
class VelocitySearch:
    v_r: float
    v_theta: float
    value: float
    ambiguous: bool
    sign_margin_db: float


def joint_velocity_search(ybars, cfg: RadarConfig, r: float, theta: float, v_r_center: float,
                          v_theta_center: float = 0.0, span: float = 30.0,
                          vt_step: float | None = None, vr_bins: float = 3.0,
                          vr_step_bins: float = 0.25, max_step: float = 0.5,
                          dqs=None) -> VelocitySearch:
    """Joint ``(v_r, v_theta)`` correlator on the extracted slow-time data.

    A coarse grid (``v_theta`` over ``+-span`` and around ``v_theta_center``,
    ``v_r`` within ``+-vr_bins`` Doppler bins of ``v_r_center``) is followed
    by a grid 8 times finer around the coarse maximum and a separable
    3-point quadratic fit. With two subarrays the opposite-sign hypothesis
    is searched again where its ridges cross the data, the larger of the
    two wins and ``sign_margin_db`` is their ratio. With a single array (no
    subarray offset) the objective is even in ``v_theta``; the nonnegative
    solution is returned and flagged ambiguous.
    """
    ybars = [np.asarray(y) for y in ybars]
    Q = len(ybars)
    dqs = _dq_list(cfg, Q) if dqs is None else list(dqs)
    vbin = _bins(cfg)[1]
    width = mainlobe_vtheta(cfg, r, theta, v_theta_center, abs(dqs[0] - dqs[-1]))
    rec = width / 4
    if vt_step is None:
        vt_step = min(rec, max_step)
    elif vt_step > width / 2:
        warnings.warn(f"v_theta step {vt_step:.3g} m/s is coarse for a main lobe of "
                      f"{width:.3g} m/s; use <= {rec:.3g}", RuntimeWarning, stacklevel=2)
    lo = min(-span, v_theta_center - 5.0)
    hi = max(span, v_theta_center + 5.0)
    # cap the coarse grid (a near-broadside or very close hypothesis shrinks the lobe)
    vt_step = max(vt_step, (hi - lo) / MAX_VT_POINTS)
    n_t = int(math.ceil((hi - lo) / vt_step))
    vt = lo + vt_step * np.arange(n_t + 1)
    vr_step = vr_step_bins * vbin
    n_r = round(vr_bins / vr_step_bins)

    def local_max(vr_c, vt):
        for _ in range(5):
            vr = vr_c + vr_step * np.arange(-n_r, n_r + 1)
            J = _correlator(ybars, cfg, r, theta, dqs, vr, vt)
            it, ir = np.unravel_index(np.argmax(J), J.shape)
            vr_c = float(vr[ir])
            if 0 < ir < vr.size - 1:
                break
        vt_c = float(vt[it])
        # fine grid
        fvt = vt_c + vt_step / 8 * np.arange(-8, 9)
        fvr = vr_c + vr_step / 8 * np.arange(-8, 9)
        F = _correlator(ybars, cfg, r, theta, dqs, fvr, fvt)
        it, ir = np.unravel_index(np.argmax(F), F.shape)
        v_t = float(fvt[it])
        v_r = float(fvr[ir])
        if 0 < it < fvt.size - 1:
            v_t += _quad_offset(F[it - 1, ir], F[it, ir], F[it + 1, ir]) * vt_step / 8
        if 0 < ir < fvr.size - 1:
            v_r += _quad_offset(F[it, ir - 1], F[it, ir], F[it, ir + 1]) * vr_step / 8
        return v_r, v_t, float(_correlator(ybars, cfg, r, theta, dqs, [v_r], [v_t])[0, 0])

    v_r, v_t, best = local_max(v_r_center, vt)
    ambiguous = all(abs(d) == 0 for d in dqs)
    if ambiguous:
        v_t = abs(v_t)
        margin = 0.0
    else:
        # the opposite sign lines up with subarray q at v_r - D_q v_theta cos(theta) / r,
        # which can lie outside the v_r window searched above
        c = math.cos(theta)
        mvt = -v_t + vt_step * np.arange(-4, 5)
        mirrors = [local_max(v_r - dq * v_t * c / r, mvt) for dq in dqs if dq != 0]
        mirror = max(mirrors, key=lambda m: m[2])
        if mirror[2] > best:
            (v_r, v_t, best), mirror = mirror, (v_r, v_t, best)
        margin = float(10 * np.log10(best / mirror[2])) if mirror[2] > 0 else math.inf
    return VelocitySearch(v_r, v_t, best, ambiguous, margin)


def objective(cube, cfg: RadarConfig, psi) -> float:
    """Noncoherent likelihood ``sum_q |a_q(psi)^H x_q|^2 / (L K N)``."""
    xs = _as_subarrays(cube)
    L, K, N = xs[0].shape
    dqs_cfg = cfg if len(xs) == cfg.num_subarrays else cfg.replace(subarray_separation_m=0.0)
    total = 0.0
    for q, x in enumerate(xs):
        f = phase_factors(phase_terms(dqs_cfg, psi, "separated", q), conj=True)
        total += abs(apply_factors(x, f).sum()) ** 2
    return float(total / (L * K * N))


# ---------------------------------------------------------------------------
# single-target estimator
# ---------------------------------------------------------------------------


def _tve(xs, cfg: RadarConfig, r, v_r, theta, v_init, eps, max_iter, pad, local_window=None):
    """Steps 4-12: compensate, refine, extract and correlate until converged."""
    Q = len(xs)
    dqs = _dq_list(cfg, Q)
    # the near-field phase terms are singular at r = 0
    r_min = 0.5 * cfg.range_resolution
    r = max(r, r_min)
    trace = [float(v_init)]
    obj_trace = []
    v_t = float(v_init)
    converged = False
    search = None
    it = 0
    for it in range(1, max_iter + 1):
        psi = np.array([r, v_r, v_t, theta])
        Y = [compensate(x, cfg, psi, q, "B_and_Z") for q, x in enumerate(xs)]
        # local to the step-1 cell: a wrong v_theta start smears the target and a
        # global search can then lock onto a distant sidelobe
        r, v_r, theta = refine_rvt(Y, cfg, pad, center=(r, v_r, theta), window=local_window or (3, 3, 3))
        del Y
        r = max(r, r_min)
        psi = np.array([r, v_r, v_t, theta])
        ybars = [extract_slow_time(compensate(x, cfg, psi, q, "B_only"), cfg, r, theta)
                 for q, x in enumerate(xs)]
        search = joint_velocity_search(ybars, cfg, r, theta, v_r, v_t, dqs=dqs)
        v_r = search.v_r
        v_new = search.v_theta
        trace.append(v_new)
        obj_trace.append(objective(xs, cfg, [r, v_r, v_new, theta]))
        done = abs(v_new - v_t) < eps
        v_t = v_new
        if done:
            converged = True
            break
    return np.array([r, v_r, v_t, theta]), trace, it, converged, obj_trace, search


def estimate_single(cube, cfg: RadarConfig | None = None, eps: float = 0.05, max_iter: int = 10,
                    pad=DEFAULT_PAD, init: str = "coarse") -> EstimationResult:
    """Single-target estimator (coordinate ascent over ``{r, v_r, theta}`` and ``{v_r, v_theta}``).

    Parameters
    ----------
    cube : DataCube or array
        Two subarrays (separated array) or one (single ULA).
    init : {"coarse", "padded"}
        Step-1 per-subarray estimates from the raw FFT bin (``"coarse"``)
        or from the padded, interpolated search (``"padded"``).

    With a single array the triangulation is unavailable: the loop starts
    from ``v_theta = 0`` and the result is flagged ambiguous in sign.
    """
    if cfg is None:
        if not isinstance(cube, DataCube):
            raise ConfigurationError("cfg is required unless a DataCube is given")
        cfg = cube.config
    xs = _as_subarrays(cube)
    if init not in ("coarse", "padded"):
        raise ValueError("init must be 'coarse' or 'padded'")
    ipad, interp = ((1, 1, 1), False) if init == "coarse" else (tuple(pad), True)
    per = []
    for x in xs:
        rq, vq, tq, lmap = ml_conventional(x, cfg, ipad, interp)
        per.append({"r": rq, "v_r": vq, "theta": tq, "peak": float(lmap.values.max())})
    return _from_init(xs, cfg, per, eps, max_iter, pad)


def _consistent(per, cfg, gate=1.5) -> bool:
    """Per-subarray step-1 estimates agree within ``gate`` bins in range and angle.

    The true cells of the two subarrays differ by a small fraction of a bin,
    so beyond straddle (one bin) a disagreement means a noise peak.
    """
    sb, _, dr = _bins(cfg)
    a, b = per
    return (abs(a["r"] - b["r"]) <= gate * dr
            and abs(math.sin(a["theta"]) - math.sin(b["theta"])) <= gate * sb)


def _from_init(xs, cfg, per, eps, max_iter, pad, local_window=None, extra_flags=()):
    Q = len(xs)
    flags = list(extra_flags)
    use = per
    if Q == 2 and not _consistent(per, cfg):
        # a noise peak won in one subarray: keep the stronger one, no triangulation
        flags.append("init_mismatch")
        use = [max(per, key=lambda p: p.get("peak", 0.0))]
    r = float(np.mean([p["r"] for p in use]))
    v_r = float(np.mean([p["v_r"] for p in use]))
    theta = math.asin(_clip_sin(np.mean([math.sin(p["theta"]) for p in use])))
    v0 = 0.0
    if Q == 2 and len(use) == 2:
        try:
            v0 = triangulate_vtheta(per[0]["v_r"], per[1]["v_r"], r, theta, cfg.subarray_separation_m)
        except EstimationError:
            flags.append("triangulation_unavailable")
        if abs(v0) > V_INIT_LIMIT:
            flags.append("triangulation_implausible")
            v0 = 0.0
    psi, trace, it, conv, obj_trace, search = _tve(xs, cfg, r, v_r, theta, v0, eps, max_iter,
                                                   pad, local_window)
    ambiguous = search.ambiguous if search else Q == 1
    if ambiguous:
        flags.append("sign_ambiguous")
    if not conv:
        flags.append("not_converged")
    return EstimationResult(psi, trace, it, conv, obj_trace[-1] if obj_trace else float("nan"),
                            per, obj_trace, ambiguous,
                            search.sign_margin_db if search else float("nan"), flags)


# ---------------------------------------------------------------------------
# multi-target estimator
# ---------------------------------------------------------------------------


def find_peaks(values: np.ndarray, M: int, exclusion, k_sigma: float = 8.0):
    """``M`` highest local maxima of a map separated by exclusion windows.

    ``exclusion`` is ``(angle, Doppler, range)`` in bins (angle and Doppler
    wrap). Only cells above ``median + k_sigma * 1.4826 MAD`` qualify.
    Returns index triples, strongest first.
    """
    P = values
    med = np.median(P)
    mad = np.median(np.abs(P - med)) * 1.4826
    mx = ndimage.maximum_filter(P, size=3, mode=("wrap", "wrap", "nearest"))
    cand = np.argwhere((P == mx) & (P > med + k_sigma * mad))
    order = np.argsort(P[tuple(cand.T)])[::-1]
    shape = P.shape
    taken: list = []
    for ci in order:
        idx = cand[ci]
        ok = True
        for t in taken:
            da = abs(idx[0] - t[0]); da = min(da, shape[0] - da)
            dd = abs(idx[1] - t[1]); dd = min(dd, shape[1] - dd)
            dr = abs(idx[2] - t[2])
            if da <= exclusion[0] and dd <= exclusion[1] and dr <= exclusion[2]:
                ok = False
                break
        if ok:
            taken.append(tuple(int(i) for i in idx))
            if len(taken) == M:
                break
    return taken


def exclusion_window(cfg: RadarConfig, v_max: float | None = None) -> tuple[int, int, int]:
    """``(3, 3 + ceil(v_max K T_PRI / dr), 3)`` bins in (angle, Doppler, range)."""
    v_max = cfg.max_unambiguous_velocity if v_max is None else v_max
    return (3, 3 + int(math.ceil(v_max * cfg.observation_time / cfg.range_resolution)), 3)


def detection_map(lmap: LikelihoodMap, box) -> np.ndarray:
    """Map integrated over a ``box`` of (angle, Doppler, range) cells.

    Integrating the power over the expected migration extent makes the
    detection statistic insensitive to how a target's energy is smeared.
    """
    return ndimage.uniform_filter(lmap.values, size=box, mode=("wrap", "wrap", "nearest"))


def _local_argmax(P: np.ndarray, center, half) -> tuple[int, int, int]:
    idx = [np.arange(c - h, c + h + 1) for c, h in zip(center, half)]
    idx[0] %= P.shape[0]
    idx[1] %= P.shape[1]
    idx[2] = np.clip(idx[2], 0, P.shape[2] - 1)
    sub = P[np.ix_(*idx)]
    j = np.unravel_index(np.argmax(sub), sub.shape)
    return tuple(int(idx[i][j[i]]) for i in range(3))


def pair_peaks(peaks0, peaks1, cfg: RadarConfig, gate_r: float = 3.0, gate_s: float = 3.0,
               gate_d: float | None = None):
    """Nearest-neighbour association of subarray peaks in ``(r, sin_theta)``.

    ``peaks`` are ``(sin, v_r, r, ...)`` tuples. The gate is ``|dr| <
    gate_r`` range bins widened by the range walk ``|v_r| K T_PRI`` of the
    candidate, ``|d sin| < gate_s`` angle bins and ``|dv_r| < gate_d``
    Doppler bins (default twice the exclusion half-width). Returns
    ``(i0, i1)`` pairs with ``None`` for unpaired peaks.
    """
    sb, vb, rb = _bins(cfg)
    excl_d = exclusion_window(cfg)[1]
    gate_d = 2 * excl_d if gate_d is None else gate_d
    cands = []
    for i, p in enumerate(peaks0):
        for j, s in enumerate(peaks1):
            walk = abs(0.5 * (p[1] + s[1])) * cfg.observation_time / rb
            dr = abs(p[2] - s[2]) / rb
            ds = abs(p[0] - s[0]) / sb
            dv = abs(p[1] - s[1]) / vb
            if dr < gate_r + walk and ds < gate_s and dv < gate_d:
                cands.append((dr ** 2 + ds ** 2 + (dv / excl_d) ** 2, i, j))
    cands.sort()
    used0, used1, pairs = set(), set(), []
    for _, i, j in cands:
        if i in used0 or j in used1:
            continue
        used0.add(i)
        used1.add(j)
        pairs.append((i, j))
    pairs += [(i, None) for i in range(len(peaks0)) if i not in used0]
    pairs += [(None, j) for j in range(len(peaks1)) if j not in used1]
    return pairs


@dataclass
class Peak:
    """One detection: raw-map maximum near an integrated-map peak.

    Indexing returns the raw ``(sin, v_r, r)`` position so peaks can be
    passed to :func:`pair_peaks` directly.
    """

    raw: tuple             # (sin, v_r, r) of the raw-map maximum
    center: tuple          # (sin, v_r, r) of the integrated-map peak
    value: float           # integrated-map value

    def __getitem__(self, i):
        return self.raw[i]


def detect_peaks(x, cfg: RadarConfig, M: int, v_max: float | None = None,
                 k_sigma: float = 8.0):
    """Up to ``M`` detections on one subarray's conventional map.

    The map is integrated over ``(1, 2 ceil(w/2) + 1, 3)`` cells, where
    ``w`` is the Doppler exclusion half-width, and detections that share a
    raw maximum are merged.
    """
    lmap = conventional_map(x, cfg)
    excl = exclusion_window(cfg, v_max)
    box = (1, 2 * ((excl[1] + 1) // 2) + 1, 3)
    S = detection_map(lmap, box)
    out, seen = [], set()
    for idx in find_peaks(S, M, excl, k_sigma):
        raw = _local_argmax(lmap.values, idx, [b // 2 for b in box])
        if raw in seen:
            continue
        seen.add(raw)
        out.append(Peak(lmap.physical(raw), lmap.physical(idx), float(S[idx])))
    return out


def estimate_multi(cube, cfg: RadarConfig | None = None, M: int = 1, eps: float = 0.05,
                   max_iter: int = 10, pad=DEFAULT_PAD, v_max: float | None = None,
                   k_sigma: float = 8.0, local_window=None) -> MultiTargetResult:
    """Multi-target estimator: peak detection, cross-subarray pairing, local TVE.

    Each subarray's conventional map is integrated over the migration
    extent and its ``M`` strongest separated peaks are kept. Peaks are
    paired across subarrays in ``(r, sin_theta)``; each pair seeds a run of
    the single-target loop restricted to ``local_window`` bins (default: the
    exclusion window) around its own estimate. Unpaired peaks are
    estimated from their own subarray as a single array and flagged
    ``unpaired`` and ``sign_ambiguous``. ``M=1`` calls :func:`estimate_single`.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    if cfg is None:
        cfg = cube.config
    xs = _as_subarrays(cube)
    if M == 1:
        return MultiTargetResult([estimate_single(xs if len(xs) > 1 else xs[0], cfg, eps, max_iter, pad)])
    window = exclusion_window(cfg, v_max) if local_window is None else tuple(local_window)
    peaks = [detect_peaks(x, cfg, M, v_max, k_sigma) for x in xs]
    shortfall = any(len(p) < M for p in peaks)
    Q = len(xs)
    pairs = pair_peaks(peaks[0], peaks[1], cfg) if Q == 2 else [(i, None) for i in range(len(peaks[0]))]

    def init(p):
        s, v, r = p.raw
        return {"r": r, "v_r": v, "theta": math.asin(_clip_sin(s))}

    results = []
    for pr in pairs:
        if Q == 2 and None not in pr:
            per = [init(peaks[q][pr[q]]) for q in (0, 1)]
            res = _from_init(xs, cfg, per, eps, max_iter, pad, window)
        else:
            q = 0 if pr[0] is not None else 1
            flags = ("unpaired",) if Q == 2 else ()
            res = _from_init([xs[q]], cfg.replace(subarray_separation_m=0.0),
                             [init(peaks[q][pr[q]])], eps, max_iter, pad, window, flags)
        results.append(res)
    results.sort(key=lambda r: -r.objective)
    _flag_overlaps(results, cfg)
    if len(results) > M:
        results = results[:M]
    if shortfall:
        for r in results:
            r.flags.append("shortfall")
    return MultiTargetResult(results, shortfall, peaks, pairs)


def _flag_overlaps(results, cfg):
    sb, vb, rb = _bins(cfg)
    for i, a in enumerate(results):
        for b in results[i + 1:]:
            if (abs(a.r - b.r) < rb and abs(a.v_r - b.v_r) < vb
                    and abs(math.sin(a.theta) - math.sin(b.theta)) < sb):
                for t in (a, b):
                    if "overlap" not in t.flags:
                        t.flags.append("overlap")
