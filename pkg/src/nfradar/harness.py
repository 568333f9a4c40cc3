"""Monte Carlo sweeps, the multi-target demonstration and radar profiles."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.optimize import linear_sum_assignment

from . import __version__
from .bounds import fim_numeric
from .estimate import (EstimationError, _bins, _correlator, _dq_list, compensate, conventional_map,
                       estimate_multi, estimate_single, evaluate_conventional, exclusion_window,
                       extract_slow_time)
from .scenario import ConfigurationError, RadarConfig, Scene, TargetState, check_assumptions
from .synth import signal_cube, synthesize

# The full-size radar is the RadarConfig default. The reduced
# profiles keep K T_PRI = 50 ms (hence the Doppler resolution and the
# near-field synthetic aperture) and the range ambiguity above the targets.
PROFILES = {
    "full": {},
    "ci": {"num_sensors_per_subarray": 8, "num_fast_samples": 160, "num_chirps": 1250,
           "pri_s": 40e-6},
    "ci_wide": {"num_sensors_per_subarray": 50, "num_fast_samples": 160, "num_chirps": 1250,
                  "pri_s": 40e-6},
    "ci_multi": {"num_sensors_per_subarray": 8, "num_fast_samples": 128, "num_chirps": 2500,
                 "pri_s": 20e-6},
    "fim_ci": {"num_sensors_per_subarray": 16, "num_fast_samples": 128, "num_chirps": 512},
}

# conditions the near-field model relies on (the others are relaxed by it)
REQUIRED_ASSUMPTIONS = ("A5", "A8", "A9", "A10", "A11")


def radar_profile(name: str = "full", **overrides) -> RadarConfig:
    """Named radar configuration, optionally with field overrides."""
    if name not in PROFILES:
        raise ConfigurationError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
    return RadarConfig(**{**PROFILES[name], **overrides})


def reference_target() -> TargetState:
    """Single target of the convergence and threshold studies (r = 90 m)."""
    return TargetState(90.0, -20.0, 10.0, math.radians(40.0))


def four_target_scene() -> list[TargetState]:
    """The four-target scene of the multi-target study."""
    d = math.radians
    return [TargetState(57.3, 2.0, 3.0, d(43.0)), TargetState(60.3, -40.0, 0.0, d(43.0)),
            TargetState(60.3, 0.0, 20.0, d(-43.0)), TargetState(57.3, -30.0, 20.0, d(-43.0))]


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

SWEEP_PARAMETERS = ("snr_db", "dbar", "v_theta")


@dataclass
class SweepSpec:
    """Monte Carlo sweep of one scenario parameter.

    ``parameter`` is ``"snr_db"``, ``"dbar"`` (subarray separation, m) or
    ``"v_theta"`` (tangential velocity of the first target, m/s). Trial
    ``t`` at grid point ``i`` draws its cube from the seed sequence
    ``(seed, i, t)``; with ``common_random_numbers`` the key is
    ``(seed, t)`` for every point, which correlates the noise across points
    and sharpens comparisons between them.
    """

    base: Scene
    parameter: str
    grid: list
    trials: int = 100
    seed: int = 0
    options: dict = field(default_factory=dict)
    common_random_numbers: bool = False
    dtype: str = "complex64"
    force: bool = False

    def __post_init__(self):
        if self.parameter not in SWEEP_PARAMETERS:
            raise ConfigurationError(f"parameter must be one of {SWEEP_PARAMETERS}")
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        g = np.asarray(self.grid, dtype=float)
        if g.ndim != 1 or g.size == 0:
            raise ConfigurationError("grid must be a non-empty 1-D sequence")
        d = np.diff(g)
        if g.size > 1 and not (np.all(d > 0) or np.all(d < 0)):
            raise ConfigurationError("grid must be strictly monotone")
        if not self.base.targets:
            raise ConfigurationError("the base scene needs a target")
        self.grid = [float(v) for v in g]

    def scene_at(self, value: float) -> Scene:
        if self.parameter == "snr_db":
            return self.base.replace(snr_db=value)
        if self.parameter == "dbar":
            return self.base.replace(config=self.base.config.replace(subarray_separation_m=value))
        tgts = list(self.base.targets)
        tgts[0] = tgts[0].replace(tangential_velocity_mps=value)
        return self.base.replace(targets=tuple(tgts))

    def to_dict(self) -> dict:
        return {"base": self.base.to_dict(), "parameter": self.parameter, "grid": self.grid,
                "trials": self.trials, "seed": self.seed, "options": dict(self.options),
                "common_random_numbers": self.common_random_numbers, "dtype": self.dtype,
                "force": self.force}

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        d = dict(d)
        base = Scene.from_dict(d.pop("base"))
        return cls(base, **d)


@dataclass
class SweepResult:
    """Per-point statistics of a sweep. ``wall_clock_s`` is kept out of :meth:`payload`."""

    spec: SweepSpec
    points: list
    wall_clock_s: list = field(default_factory=list)

    def column(self, key: str) -> np.ndarray:
        return np.array([p[key] for p in self.points], dtype=float)

    def payload(self) -> dict:
        return {"spec": self.spec.to_dict(), "points": self.points, "version": __version__}

    def to_json(self) -> str:
        return json.dumps(self.payload(), indent=2, sort_keys=True, default=_json_default)

    def csv_rows(self) -> list[dict]:
        keys = ["value", "rmse_vtheta", "rmse_vtheta_lo", "rmse_vtheta_hi", "crb_vtheta",
                "crb_vtheta_closed", "rmse_r", "rmse_vr", "rmse_theta_deg", "sign_error_rate",
                "convergence_rate", "failure_rate", "mean_iterations", "flagged"]
        return [{k: p[k] for k in keys} for p in self.points]


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _rmse_ci(sq_errors: np.ndarray, level: float = 0.95):
    n = sq_errors.size
    rmse = float(np.sqrt(np.mean(sq_errors)))
    if n < 2:
        return rmse, float("nan"), float("nan")
    a = (1 - level) / 2
    lo = rmse * math.sqrt(n / stats.chi2.ppf(1 - a, n))
    hi = rmse * math.sqrt(n / stats.chi2.ppf(a, n))
    return rmse, lo, hi


def _crb(scene: Scene):
    """Numeric and closed-form ``v_theta`` bounds for the first target."""
    if not np.isfinite(scene.snr_db):
        return 0.0, 0.0
    try:
        rep = fim_numeric(scene.config, scene.targets[0], snr_db=scene.snr_db)
    except (ValueError, MemoryError):
        return float("nan"), float("nan")
    return rep.crb_vtheta_numeric, rep.crb_vtheta_closed


def run_sweep(spec: SweepSpec, progress=None) -> SweepResult:
    """Run ``estimate_single`` on ``trials`` synthesized cubes per grid point.

    Estimator failures are counted; a point is ``flagged`` when more than
    half of its trials fail. The ``v_theta`` CRB (numeric FIM and closed
    form, gains of unit modulus) is attached to every point.
    """
    for value in spec.grid:
        sc = spec.scene_at(value)
        if not spec.force:
            rep = check_assumptions(sc.config, sc.targets[0])
            if not rep.passes(REQUIRED_ASSUMPTIONS):
                bad = [n for n in REQUIRED_ASSUMPTIONS if rep[n].status == "warn"]
                raise ConfigurationError(f"assumptions {bad} fail at {spec.parameter}={value}; "
                                         "use force=True to run anyway")
    dtype = np.dtype(spec.dtype).type
    opts = {"eps": 0.05, "max_iter": 10, **spec.options}
    points, clocks = [], []
    for i, value in enumerate(spec.grid):
        sc = spec.scene_at(value)
        truth = sc.targets[0].psi
        t0 = time.perf_counter()
        errs, conv, iters, sign_err, fails = [], [], [], [], 0
        for t in range(spec.trials):
            key = [spec.seed, t] if spec.common_random_numbers else [spec.seed, i, t]
            cube = synthesize(sc, seed=key, dtype=dtype)
            try:
                res = estimate_single(cube, sc.config, **opts)
            except (EstimationError, ValueError, FloatingPointError):
                fails += 1
                continue
            if not np.all(np.isfinite(res.psi)):
                fails += 1
                continue
            errs.append(res.psi - truth)
            conv.append(res.converged)
            iters.append(res.iterations)
            if truth[2] != 0:
                sign_err.append(np.sign(res.v_theta) != np.sign(truth[2]))
        clocks.append(time.perf_counter() - t0)
        e = np.array(errs).reshape(-1, 4)
        crb_num, crb_closed = _crb(sc)
        if e.shape[0]:
            rv, lo, hi = _rmse_ci(e[:, 2] ** 2)
            rr = float(np.sqrt(np.mean(e[:, 0] ** 2)))
            rvr = float(np.sqrt(np.mean(e[:, 1] ** 2)))
            rth = float(np.degrees(np.sqrt(np.mean(e[:, 3] ** 2))))
        else:
            rv = lo = hi = rr = rvr = rth = float("nan")
        n_ok = max(1, e.shape[0])
        points.append({
            "value": value, "trials": spec.trials, "failures": fails,
            "failure_rate": fails / spec.trials, "flagged": fails > spec.trials / 2,
            "rmse_vtheta": rv, "rmse_vtheta_lo": lo, "rmse_vtheta_hi": hi,
            "rmse_r": rr, "rmse_vr": rvr, "rmse_theta_deg": rth,
            "crb_vtheta": crb_num, "crb_vtheta_closed": crb_closed,
            "sign_error_rate": float(np.mean(sign_err)) if sign_err else float("nan"),
            "convergence_rate": float(np.sum(conv)) / n_ok,
            "mean_iterations": float(np.mean(iters)) if iters else float("nan"),
            "abs_errors_vtheta": [float(abs(v)) for v in e[:, 2]],
        })
        if progress:
            progress(i, points[-1])
    return SweepResult(spec, points, clocks)


def threshold_snr(result: SweepResult, factor: float = 3.0, bound: str = "crb_vtheta"):
    """First grid SNR at which ``RMSE(v_theta) < factor * sqrt(CRB)`` (``None`` if never)."""
    if result.spec.parameter != "snr_db":
        raise ValueError("threshold SNR needs an SNR sweep")
    order = np.argsort(result.spec.grid)
    for i in order:
        p = result.points[i]
        if p["rmse_vtheta"] < factor * math.sqrt(p[bound]):
            return result.spec.grid[i]
    return None


# ---------------------------------------------------------------------------
# multi-target demonstration
# ---------------------------------------------------------------------------


def match_targets(estimates, truths) -> list:
    """Assign estimates to true targets (Hungarian on normalized distances).

    Returns, per true target, the index of its estimate or ``None``.
    """
    if not estimates:
        return [None] * len(truths)
    C = np.zeros((len(truths), len(estimates)))
    for i, t in enumerate(truths):
        for j, e in enumerate(estimates):
            C[i, j] = (((e.r - t.range_m) / 0.6) ** 2 + ((e.v_r - t.radial_velocity_mps) / 0.5) ** 2
                       + ((math.sin(e.theta) - math.sin(t.doa_rad)) / 0.05) ** 2)
    rows, cols = linear_sum_assignment(C)
    out = [None] * len(truths)
    for i, j in zip(rows, cols):
        out[i] = int(j)
    return out


def _window(cfg: RadarConfig, lmap, tgt: TargetState):
    excl = exclusion_window(cfg)
    walk = abs(tgt.radial_velocity_mps) * cfg.observation_time / cfg.range_resolution
    half = (1, excl[1], 3 + int(math.ceil(walk / 2)))
    c = lmap.index_of(math.sin(tgt.doa_rad), tgt.radial_velocity_mps, tgt.range_m)
    idx = [np.arange(ci - h, ci + h + 1) for ci, h in zip(c, half)]
    idx[0] %= lmap.values.shape[0]
    idx[1] %= lmap.values.shape[1]
    idx[2] = np.clip(idx[2], 0, lmap.values.shape[2] - 1)
    return np.ix_(*idx)


def _peak_energy_ratio(x_q, cfg: RadarConfig, lmap, win, floor: float = 0.0) -> float:
    """Peak power (on a 1/4-bin local grid) over the window energy of the unpadded map."""
    W = np.clip(lmap.values[win] - floor, 0.0, None)
    energy = W.sum()
    if energy <= 0:
        return float("nan")
    cell = tuple(int(ix.ravel()[i]) for ix, i in zip(win, np.unravel_index(np.argmax(W), W.shape)))
    center = lmap.physical(cell)
    bins = _bins(cfg)
    grids = [center[i] + bins[i] / 4 * np.arange(-4, 5) for i in range(3)]
    grids[0] = np.clip(grids[0], -0.999999, 0.999999)
    peak = evaluate_conventional(x_q, cfg, *grids).max() - floor
    return float(peak / energy)


def smear_metric(x_q: np.ndarray, cfg: RadarConfig, tgt: TargetState, floor: float = 0.0) -> float:
    """Peak-to-window-energy ratio of a target's map, relative to an ideal point target.

    The window spans the Doppler exclusion width, the range walk plus 3
    bins and one angle bin either side of the true cell. The peak is taken
    on a quarter-bin local grid so that straddle loss cancels. The
    reference is a migration-free target with the same ``(r, v_r, theta)``,
    so a value of 1 means no smear.
    """
    from .synth import conventional_steering
    lmap = conventional_map(x_q, cfg)
    win = _window(cfg, lmap, tgt)
    ratio = _peak_energy_ratio(x_q, cfg, lmap, win, floor)
    ref = conventional_steering(cfg, tgt.range_m, tgt.radial_velocity_mps, tgt.doa_rad).tensor
    ref_ratio = _peak_energy_ratio(ref, cfg, conventional_map(ref, cfg), win)
    return ratio / ref_ratio


@dataclass
class MultiTargetBundle:
    """Maps and estimates from :func:`run_multitarget_demo`.

    ``raw_images[q]`` is the conventional map of subarray ``q`` maximized
    over angle (Doppler x range). Per true target, ``compensated_images``
    holds the same image after compensating with the matched estimate and
    ``velocity_maps`` the ``(v_theta, v_r)`` correlator surface.
    """

    scene: Scene
    estimates: object
    matches: list
    raw_images: list
    raw_axes: dict
    compensated_images: list
    velocity_maps: list
    smear_before: np.ndarray      # (M, Q)
    smear_after: np.ndarray       # (M, Q)

    @property
    def smear_gain_db(self) -> np.ndarray:
        """Mean over subarrays of ``10 log10(after / before)`` per target."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.mean(10 * np.log10(self.smear_after / self.smear_before), axis=1)

    def table(self) -> list[dict]:
        rows = []
        for m, t in enumerate(self.scene.targets):
            j = self.matches[m]
            e = self.estimates[j] if j is not None else None
            rows.append({
                "target": m + 1, "r": t.range_m, "v_r": t.radial_velocity_mps,
                "v_theta": t.tangential_velocity_mps, "theta_deg": math.degrees(t.doa_rad),
                "r_hat": e.r if e else None, "v_r_hat": e.v_r if e else None,
                "v_theta_hat": e.v_theta if e else None,
                "theta_hat_deg": math.degrees(e.theta) if e else None,
                "flags": ";".join(e.flags) if e else "missing",
                "smear_gain_db": float(self.smear_gain_db[m]),
            })
        return rows


def run_multitarget_demo(scene: Scene, M: int | None = None, eps: float = 0.05,
                         max_iter: int = 10, noiseless_metric: bool = True,
                         dtype=np.complex64, velocity_grid=(61, 121)) -> MultiTargetBundle:
    """Synthesize ``scene``, run the multi-target estimator and collect maps.

    The smear metric is computed on the noiseless signal when
    ``noiseless_metric`` (the default), otherwise on the noisy maps with
    the noise power subtracted. Compensation uses each target's estimate.
    """
    cfg = scene.config
    M = len(scene.targets) if M is None else M
    cube = synthesize(scene, dtype=dtype)
    est = estimate_multi(cube, cfg, M, eps, max_iter)
    matches = match_targets(list(est), scene.targets)
    Q = cfg.num_subarrays
    if noiseless_metric:
        metric_src, floor = signal_cube(scene, cube.amplitudes, dtype), 0.0
    else:
        metric_src, floor = cube.samples, cube.noise_var
    raw_images, axes = [], None
    for q in range(Q):
        lm = conventional_map(cube.samples[q], cfg)
        raw_images.append(lm.values.max(axis=0))
        axes = {"v_r": lm.axes["v_r"], "r": lm.axes["r"]}
    before = np.full((len(scene.targets), Q), np.nan)
    after = np.full_like(before, np.nan)
    comp_images, vel_maps = [], []
    dqs = _dq_list(cfg, Q)
    for m, tgt in enumerate(scene.targets):
        for q in range(Q):
            before[m, q] = smear_metric(metric_src[q], cfg, tgt, floor)
        j = matches[m]
        if j is None:
            comp_images.append(None)
            vel_maps.append(None)
            continue
        e = est[j]
        comp = [compensate(metric_src[q], cfg, e.psi, q, "B_and_Z") for q in range(Q)]
        for q in range(Q):
            after[m, q] = smear_metric(comp[q], cfg, tgt, floor)
        noisy = [compensate(cube.samples[q], cfg, e.psi, q, "B_and_Z") for q in range(Q)]
        comp_images.append(conventional_map(noisy, cfg).values.max(axis=0))
        ybars = [extract_slow_time(compensate(cube.samples[q], cfg, e.psi, q, "B_only"),
                                   cfg, e.r, e.theta) for q in range(Q)]
        vb = cfg.doppler_bin_mps
        vr = e.v_r + vb * np.linspace(-3, 3, velocity_grid[0])
        vt = np.linspace(-30, 30, velocity_grid[1])
        vel_maps.append({"v_r": vr, "v_theta": vt,
                         "values": _correlator(ybars, cfg, e.r, e.theta, dqs, vr, vt)})
    return MultiTargetBundle(scene, est, matches, raw_images, axes, comp_images, vel_maps,
                             before, after)
