"""Steering tensors, data-cube synthesis and approximation-error bounds.

Every steering model is a unit-modulus tensor over (sensor l, chirp k,
fast-time sample n) whose phase is a sum of low-rank terms, each depending
on at most two of the three axes. :func:`phase_terms` returns those terms
(with analytic parameter derivatives); everything else in the package
(synthesis, FIM, ambiguity functions, compensation) is assembled from them
so that no full tensor is materialized unless needed.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .scenario import ConfigurationError, RadarConfig, Scene, TargetState

PARAMS = ("r", "v_r", "v_theta", "theta")
TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# phase terms
# ---------------------------------------------------------------------------


@dataclass
class PhaseTerm:
    """One additive phase component (radians) of a steering tensor.

    ``value`` broadcasts against shape ``(L, K, N)``. ``factor`` records which
    of the model tensors (``"E"``, ``"B"`` or ``"Z"``) the term belongs to.
    ``grad`` maps parameter names in :data:`PARAMS` to the derivative of
    ``value``; missing names mean zero derivative.
    """

    name: str
    factor: str
    value: np.ndarray
    grad: dict = field(default_factory=dict)

    @property
    def axes(self) -> tuple[bool, bool, bool]:
        return tuple(s != 1 for s in self.value.shape)


def _axes(cfg: RadarConfig):
    d = cfg.sensor_positions[:, None, None]
    Tk = cfg.slow_time_grid[None, :, None]
    u = (cfg.fast_time_grid / cfg.chirp_duration_s)[None, None, :]  # t_n / T_c
    return d, Tk, u


def phase_terms(cfg: RadarConfig, psi, model: str = "separated", q: int = 0) -> list[PhaseTerm]:
    """Phase components of the steering tensor for ``psi = [r, v_r, v_theta, theta]``.

    Parameters
    ----------
    model : {"conventional", "ula_nearfield", "ula_full", "separated"}
        ``ula_nearfield`` keeps only the slow-time range walk in the range
        migration tensor; ``ula_full`` adds the aperture range walk and the
        quadratic DOA migration. ``separated`` uses the subarray centre
        ``Dbar_q`` (which may be zero).
    q : int
        Subarray index for the separated model.
    """
    r, v_r, v_t, th = (float(p) for p in psi)
    lam = cfg.wavelength
    dr = cfg.range_resolution
    d, Tk, u = _axes(cfg)
    s, c = np.sin(th), np.cos(th)
    terms = []
    add = lambda *a: terms.append(PhaseTerm(*a))

    # conventional tensor E = eta3 o eta2 o eta1
    add("range", "E", -TWO_PI * (r / dr) * u, {"r": -TWO_PI / dr * u})
    add("doppler", "E", -TWO_PI * (2 * v_r / lam) * Tk, {"v_r": -TWO_PI * 2 / lam * Tk})
    add("doa", "E", TWO_PI * s * d / lam, {"theta": TWO_PI * c * d / lam})
    if model == "conventional":
        return terms
    if model not in ("ula_nearfield", "ula_full", "separated"):
        raise ValueError(f"unknown model {model!r}")

    rl = r * lam
    add("range_walk", "B", -TWO_PI * (v_r / dr) * Tk * u, {"v_r": -TWO_PI / dr * Tk * u})
    zfac = "Z" if model != "separated" else "B"
    add("spatial_doppler", zfac, TWO_PI * v_t * c * d * Tk / rl,
        {"r": -TWO_PI * v_t * c * d * Tk / (r * rl),
         "v_theta": TWO_PI * c * d * Tk / rl,
         "theta": -TWO_PI * v_t * s * d * Tk / rl})
    add("quadratic", "Z", -TWO_PI * v_t ** 2 * Tk ** 2 / rl,
        {"r": TWO_PI * v_t ** 2 * Tk ** 2 / (r * rl),
         "v_theta": -2 * TWO_PI * v_t * Tk ** 2 / rl})
    if model == "ula_full":
        add("aperture_walk", "B", TWO_PI * d * s * u / (2 * dr),
            {"theta": TWO_PI * d * c * u / (2 * dr)})
        add("doa_migration", "B", -TWO_PI * c ** 2 * d ** 2 / (2 * rl),
            {"r": TWO_PI * c ** 2 * d ** 2 / (2 * r * rl),
             "theta": TWO_PI * s * c * d ** 2 / rl})
    if model == "separated":
        if q not in (0, 1):
            raise ConfigurationError(f"subarray index must be 0 or 1 (got {q})")
        Dq = cfg.subarray_separation_m * (q - 0.5)
        add("subarray_walk", "B", TWO_PI * Dq * s * u / (2 * dr),
            {"theta": TWO_PI * Dq * c * u / (2 * dr)})
        add("subarray_doa", "B", -TWO_PI * Dq * c ** 2 * d / rl,
            {"r": TWO_PI * Dq * c ** 2 * d / (r * rl),
             "theta": TWO_PI * Dq * 2 * s * c * d / rl})
        add("subarray_doppler", "Z", TWO_PI * Dq * v_t * c * Tk / rl,
            {"r": -TWO_PI * Dq * v_t * c * Tk / (r * rl),
             "v_theta": TWO_PI * Dq * c * Tk / rl,
             "theta": -TWO_PI * Dq * v_t * s * Tk / rl})
    return terms


def select(terms, factors) -> list[PhaseTerm]:
    return [t for t in terms if t.factor in factors]


def phase_factors(terms, conj: bool = False) -> list[np.ndarray]:
    """Exponentiate ``terms`` after merging those that share the same axes."""
    groups: dict = {}
    for t in terms:
        key = t.axes
        groups[key] = groups[key] + t.value if key in groups else t.value
    sign = -1j if conj else 1j
    return [np.exp(sign * v) for v in groups.values()]


def materialize(factors, shape, dtype=np.complex128) -> np.ndarray:
    """Multiply broadcastable factors into a dense array of ``shape``.

    Factors without a sensor axis are combined first, so at most one or two
    full-size products are formed.
    """
    if not factors:
        return np.ones(shape, dtype=dtype)
    no_l = [f for f in factors if f.shape[0] == 1]
    with_l = [f for f in factors if f.shape[0] != 1]
    parts = []
    if no_l:
        parts.append(reduce(np.multiply, no_l))
    if with_l:
        parts.append(reduce(np.multiply, with_l))
    parts = [p.astype(dtype, copy=False) for p in parts]
    out = parts[0] * parts[1] if len(parts) == 2 else parts[0]
    return np.broadcast_to(out, shape).astype(dtype, copy=True) if out.shape != tuple(shape) else out


def apply_factors(x: np.ndarray, factors) -> np.ndarray:
    """Return ``x`` (``(L, K, N)``) multiplied by broadcastable factors."""
    y = None
    for grp in ([f for f in factors if f.shape[0] == 1], [f for f in factors if f.shape[0] != 1]):
        if not grp:
            continue
        f = reduce(np.multiply, grp).astype(x.dtype, copy=False)
        y = x * f if y is None else np.multiply(y, f, out=y)
    return x.copy() if y is None else y


# ---------------------------------------------------------------------------
# steering sets
# ---------------------------------------------------------------------------


@dataclass
class SteeringSet:
    """Dense steering tensors for one (sub)array.

    ``vector`` is the flattened product ``e * b * z`` in (l, k, n) row-major
    order. Absent factors are all-ones tensors.
    """

    e_tensor: np.ndarray | None
    b_tensor: np.ndarray | None
    z_tensor: np.ndarray | None
    model: str = "conventional"
    q: int = 0

    @property
    def tensor(self) -> np.ndarray:
        out = None
        for t in (self.e_tensor, self.b_tensor, self.z_tensor):
            if t is not None:
                out = t.copy() if out is None else out * t
        return out

    @property
    def vector(self) -> np.ndarray:
        return self.tensor.reshape(-1)


def _shape(cfg):
    return (cfg.num_sensors_per_subarray, cfg.num_chirps, cfg.num_fast_samples)


def _tensor(cfg, terms, factor):
    return materialize(phase_factors(select(terms, factor)), _shape(cfg))


def conventional_steering(cfg: RadarConfig, r, v_r, theta) -> SteeringSet:
    """Far-field, migration-free tensor ``E`` of a target at ``(r, v_r, theta)``."""
    terms = phase_terms(cfg, (r, v_r, 0.0, theta), "conventional")
    e = materialize([np.exp(1j * t.value) for t in terms], _shape(cfg))
    return SteeringSet(e, None, None, "conventional")


def migration_tensors_ula(cfg: RadarConfig, r, v_r, v_theta, theta, full: bool = False) -> SteeringSet:
    """``E``, ``B`` and ``Z`` tensors of the single-ULA near-field model.

    ``full=True`` returns the general ``B`` that also carries the range walk
    across the aperture and the quadratic DOA migration.
    """
    model = "ula_full" if full else "ula_nearfield"
    terms = phase_terms(cfg, (r, v_r, v_theta, theta), model)
    return SteeringSet(_tensor(cfg, terms, "E"), _tensor(cfg, terms, "B"),
                       _tensor(cfg, terms, "Z"), model)


def separated_steering(cfg: RadarConfig, psi, q: int) -> SteeringSet:
    """``E``, ``B_q`` and ``Z_q`` for subarray ``q`` of a separated array."""
    if q not in (0, 1):
        raise ConfigurationError(f"subarray index must be 0 or 1 (got {q})")
    terms = phase_terms(cfg, psi, "separated", q)
    return SteeringSet(_tensor(cfg, terms, "E"), _tensor(cfg, terms, "B"),
                       _tensor(cfg, terms, "Z"), "separated", q)


def zbar(cfg: RadarConfig, r, v_theta, theta, q: int) -> np.ndarray:
    """Slow-time vector ``zbar_q[k]`` (quadratic plus subarray Doppler term)."""
    terms = phase_terms(cfg, (r, 0.0, v_theta, theta), "separated", q)
    ph = sum(t.value for t in select(terms, "Z"))
    return np.exp(1j * np.broadcast_to(ph, (1, cfg.num_chirps, 1))[0, :, 0])


def model_for(cfg: RadarConfig, mode: str | None = None) -> str:
    if mode is None:
        return "separated" if cfg.is_separated else "ula_nearfield"
    return mode


def steering_tensor(cfg: RadarConfig, psi, model: str | None = None, q: int = 0,
                    dtype=np.complex128) -> np.ndarray:
    """Dense unit-modulus steering tensor ``a_q(psi)`` shaped ``(L, K, N)``."""
    model = model_for(cfg, model)
    return materialize(phase_factors(phase_terms(cfg, psi, model, q)), _shape(cfg), dtype)


def steering_vector(cfg: RadarConfig, psi, model: str | None = None, q: int = 0) -> np.ndarray:
    return steering_tensor(cfg, psi, model, q).reshape(-1)


# ---------------------------------------------------------------------------
# exact propagation
# ---------------------------------------------------------------------------


def exact_steering(cfg: RadarConfig, psi, q: int = 0, include_rvp: bool = True,
                   chunk: int = 1 << 22) -> np.ndarray:
    """Unit-modulus mixer output from exact propagation geometry.

    The transmitter sits at the array origin and sensor ``l`` of subarray
    ``q`` at ``Dbar_q + d_l`` on the x-axis. Ranges use the exact square
    root, the two-way delay is ``(r(t) + r_l(t)) / c`` and the beat signal
    keeps the residual video phase ``pi a tau^2`` (disable with
    ``include_rvp=False``). The phase at ``t = 0`` for a virtual sensor at
    the subarray centre is removed, since that constant is absorbed into the
    subarray gain.
    """
    r, v_r, v_t, th = (float(p) for p in psi)
    c0 = cfg.wave_speed_mps
    a = cfg.chirp_slope
    wc = TWO_PI * cfg.carrier_frequency_hz
    s, co = np.sin(th), np.cos(th)
    vx = v_r * s + v_t * co
    x0 = r * s
    vT2 = v_r ** 2 + v_t ** 2
    Dq = cfg.subarray_center(q) if cfg.is_separated else 0.0

    p = Dq + cfg.sensor_positions                     # (L,)
    Rp = np.sqrt(r ** 2 - 2 * p * x0 + p ** 2)        # r_l(0)
    Rref = np.sqrt(r ** 2 - 2 * Dq * x0 + Dq ** 2)
    dRp = (-2 * (p - Dq) * x0 + p ** 2 - Dq ** 2) / (Rp + Rref)
    tau_ref = (r + Rref) / c0

    L, K, N = _shape(cfg)
    tn = cfg.fast_time_grid
    Tk = cfg.slow_time_grid
    out = np.empty((L, K, N), dtype=np.complex128)
    kc = max(1, chunk // max(1, L * N))
    for k0 in range(0, K, kc):
        t = Tk[k0:k0 + kc, None] + tn[None, :]        # (kc, N)
        rt = np.sqrt(r ** 2 + 2 * r * v_r * t + vT2 * t ** 2)
        d_rt = (2 * r * v_r * t + vT2 * t ** 2) / (rt + r)
        t3 = t[None]
        num = 2 * r * v_r * t3 - 2 * p[:, None, None] * vx * t3 + vT2 * t3 ** 2
        rl = np.sqrt(Rp[:, None, None] ** 2 + num)
        d_rl = num / (rl + Rp[:, None, None])
        dtau = (d_rt[None] + d_rl + dRp[:, None, None]) / c0
        tau = tau_ref + dtau
        phase = -TWO_PI * a * tn[None, None, :] * tau - wc * dtau
        if include_rvp:
            phase += np.pi * a * dtau * (2 * tau_ref + dtau)
        out[:, k0:k0 + kc, :] = np.exp(1j * phase)
    return out


# ---------------------------------------------------------------------------
# data cubes
# ---------------------------------------------------------------------------


@dataclass
class DataCube:
    """Complex samples shaped ``(Q, L, K, N)`` plus provenance."""

    samples: np.ndarray
    config: RadarConfig
    noise_var: float
    seed: int = 0
    fidelity: str = "approx"
    scene: Scene | None = None
    amplitudes: np.ndarray | None = None   # (M, Q) gains actually used

    def __post_init__(self):
        if self.samples.ndim != 4 or self.samples.shape != self.config.shape:
            raise ConfigurationError(
                f"cube shape {self.samples.shape} does not match config {self.config.shape}")

    @property
    def num_subarrays(self) -> int:
        return self.samples.shape[0]

    def __getitem__(self, q) -> np.ndarray:
        return self.samples[q]


def noise_variance(cfg: RadarConfig, snr_db: float) -> float:
    """``sigma^2 = Q L N K / SNR`` for unit-modulus gains (zero when SNR is inf)."""
    if np.isnan(snr_db) or snr_db == -np.inf:
        raise ConfigurationError(f"SNR must be positive in linear scale (got {snr_db} dB)")
    if snr_db == np.inf:
        return 0.0
    L, K, N = _shape(cfg)
    return cfg.num_subarrays * L * N * K / 10.0 ** (snr_db / 10.0)


def draw_amplitudes(scene: Scene, rng: np.random.Generator) -> np.ndarray:
    Q = scene.config.num_subarrays
    amps = np.empty((len(scene.targets), Q), dtype=np.complex128)
    for m, t in enumerate(scene.targets):
        if t.amplitudes is None:
            ph = rng.uniform(0, TWO_PI, size=1 if scene.coherent else Q)
            amps[m] = np.exp(1j * ph)
        else:
            if len(t.amplitudes) not in (1, Q):
                raise ConfigurationError(
                    f"target {m} has {len(t.amplitudes)} amplitudes, expected {Q}")
            amps[m] = t.amplitudes if len(t.amplitudes) == Q else t.amplitudes[0]
    return amps


def signal_cube(scene: Scene, amplitudes: np.ndarray, dtype=np.complex128) -> np.ndarray:
    cfg = scene.config
    Q = cfg.num_subarrays
    model = scene.resolved_mode
    out = np.zeros(cfg.shape, dtype=dtype)
    for m, t in enumerate(scene.targets):
        for q in range(Q):
            if scene.fidelity == "exact":
                a = exact_steering(cfg, t.psi, q).astype(dtype, copy=False)
            else:
                a = steering_tensor(cfg, t.psi, model, q, dtype)
            out[q] += amplitudes[m, q] * a
    return out


def synthesize(scene: Scene, seed: int | None = None, dtype=np.complex128,
               noise_var: float | None = None) -> DataCube:
    """Synthesize ``sum_m beta_m a(psi_m) + w`` for every subarray.

    The noise variance follows from ``scene.snr_db`` for unit-modulus gains
    (``sigma^2 = Q L N K / SNR``) unless ``noise_var`` is given. Targets
    without amplitudes get unit-modulus gains with random phases, independent
    per subarray unless ``scene.coherent``.
    """
    seed = scene.seed if seed is None else seed
    cfg = scene.config
    s2 = noise_variance(cfg, scene.snr_db) if noise_var is None else float(noise_var)
    if s2 < 0:
        raise ConfigurationError("noise variance must be >= 0")
    ss = np.random.SeedSequence(seed)
    amp_ss, *noise_ss = ss.spawn(1 + cfg.num_subarrays)
    amps = draw_amplitudes(scene, np.random.default_rng(amp_ss))
    x = signal_cube(scene, amps, dtype)
    if s2 > 0:
        real = np.float32 if dtype == np.complex64 else np.float64
        scale = np.sqrt(s2 / 2.0)
        for q, child in enumerate(noise_ss):
            rng = np.random.default_rng(child)
            w = rng.standard_normal((2,) + x.shape[1:], dtype=real)
            x[q] += scale * (w[0] + 1j * w[1])
    return DataCube(x, cfg, s2, seed, scene.fidelity, scene, amps)


def empirical_snr_db(cube: DataCube, clean: np.ndarray) -> float:
    """SNR of ``cube`` given its noiseless part, using per-subarray gains."""
    noise = cube.samples - clean
    s2 = np.mean(np.abs(noise) ** 2)
    L, K, N = cube.config.num_sensors_per_subarray, cube.config.num_chirps, cube.config.num_fast_samples
    gains = np.sum(np.abs(cube.amplitudes) ** 2) if cube.amplitudes is not None else 0.0
    return float(10 * np.log10(L * N * K * gains / s2))


# ---------------------------------------------------------------------------
# approximation error
# ---------------------------------------------------------------------------


@dataclass
class ApproximationReport:
    """Phase-error magnitudes (radians) of the simplifications in the model.

    ``terms`` maps ``"group/name"`` to a phase in radians; groups are
    ``rvp`` (residual video phase bound), ``fast_time`` (second-order delay
    inside the beat tone), ``sampling`` (cross terms dropped when sampling
    ``t = T_k + t_n``) and ``taylor`` (second-order range expansion).
    """

    terms: dict
    taylor_residual_m: float
    budget_rad: float = 0.1

    def status(self, key) -> str:
        return "pass" if self.terms[key] < self.budget_rad else "warn"

    def table(self) -> str:
        lines = [f"{'term':<28} {'phase [rad]':>12} status"]
        for k, v in self.terms.items():
            lines.append(f"{k:<28} {v:>12.4g} {self.status(k)}")
        lines.append(f"{'taylor residual [m]':<28} {self.taylor_residual_m:>12.4g}")
        return "\n".join(lines)


def taylor_residual(cfg: RadarConfig, tgt: TargetState, t, p):
    """Exact ``r_l(t)`` minus its second-order expansion, for sensor at ``p``."""
    r, v_r, v_t, th = tgt.psi
    s, c = np.sin(th), np.cos(th)
    vx = v_r * s + v_t * c
    t = np.asarray(t, dtype=float)
    p = np.asarray(p, dtype=float)
    vT2 = v_r ** 2 + v_t ** 2
    num = 2 * r * v_r * t - 2 * p * vx * t + vT2 * t ** 2 - 2 * p * r * s + p ** 2
    exact = num / (np.sqrt(r ** 2 + num) + r)
    approx = v_r * t - p * s + (v_t * t - p * c) ** 2 / (2 * r)
    return exact - approx


def approximation_error(cfg: RadarConfig, tgt: TargetState, budget_rad: float = 0.1) -> ApproximationReport:
    """Bound the phase error of each simplification in the closed-form model.

    Bounds on ``a tau^2`` and on the fast-time delay error are stated in the
    literature as ``phase / pi``; they are multiplied by ``pi`` here so every
    entry is in radians. Sampling cross terms are evaluated at their maxima
    ``|t_n| = T_c/2``, ``|T_k| = (K-1) T_PRI / 2`` and the farthest sensor.
    """
    a = cfg.chirp_slope
    c0 = cfg.wave_speed_mps
    lam = cfg.wavelength
    KT = cfg.observation_time
    r, v_r, v_t, th = tgt.psi
    vT = tgt.speed
    vx, _ = tgt.velocity_xy
    D = cfg.total_aperture
    x0 = abs(r * np.sin(th))
    pi = np.pi
    terms = {
        "rvp/range_rate": pi * a * 8 * r * abs(v_r) * KT / c0 ** 2,
        "rvp/speed_squared": pi * a * 4 * vT ** 2 * KT ** 2 / c0 ** 2,
        "rvp/aperture_squared": pi * a * 4 * D ** 2 / c0 ** 2,
        "rvp/aperture_offset": pi * a * 8 * D * x0 / c0 ** 2,
        "rvp/aperture_motion": pi * a * 8 * D * abs(vx) * KT / c0 ** 2,
        "fast_time/delay_curvature": pi * (cfg.bandwidth_hz * (v_t * KT) ** 2 / (r * c0)
                                           + cfg.bandwidth_hz * (abs(v_t) * KT + D) ** 2 / (r * c0)),
    }
    tn = cfg.chirp_duration_s / 2
    Tk = (cfg.num_chirps - 1) * cfg.pri_s / 2
    dmax = max(abs(cfg.subarray_separation_m) / 2 + cfg.aperture / 2, 0.0)
    terms.update({
        "sampling/fast_time_chirp": TWO_PI * a * 2 * abs(v_r) / c0 * tn ** 2,
        "sampling/intra_chirp_doppler": TWO_PI * 2 * abs(v_r) / lam * tn,
        "sampling/slow_fast_cross": TWO_PI * 2 * v_t ** 2 / (r * lam) * Tk * tn,
        "sampling/fast_quadratic": TWO_PI * v_t ** 2 / (r * lam) * tn ** 2,
        "sampling/sensor_fast_cross": TWO_PI * abs(v_t * np.cos(th)) / (r * lam) * dmax * tn,
        # delay of sensor d_l inside a subarray, dropped by the separable fast-time term
        "sampling/spatial_range_migration": TWO_PI * a * tn * (cfg.aperture / 2) * abs(np.sin(th)) / c0,
        # Fresnel term of a subarray about its own centre
        "near_field/aperture_fresnel": TWO_PI * np.cos(th) ** 2 * (cfg.aperture / 2) ** 2 / (2 * r * lam),
    })
    # Taylor residual over the observation and every sensor position.
    pos = np.concatenate([cfg.subarray_center(q) + cfg.sensor_positions
                          for q in range(cfg.num_subarrays)])
    t = np.concatenate([cfg.slow_time_grid - tn, cfg.slow_time_grid + tn])
    res = np.max(np.abs(taylor_residual(cfg, tgt, t[None, :], pos[:, None])))
    res0 = np.max(np.abs(taylor_residual(cfg, tgt, t, 0.0)))
    terms["taylor/two_way_phase"] = TWO_PI * (res + res0) / lam
    return ApproximationReport(terms, float(res), budget_rad)


def phase_discrepancy(a: np.ndarray, b: np.ndarray) -> float:
    """Largest ``|arg(a conj(b))|`` over all samples."""
    return float(np.max(np.abs(np.angle(a * np.conj(b)))))


# ---------------------------------------------------------------------------
# binary dump
# ---------------------------------------------------------------------------

MAGIC = b"NFRC"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIIBdQ")


def _header_seed(seed) -> int:
    # sequence seeds (sweep substreams) live in the sidecar only
    return int(seed) & 0xFFFFFFFFFFFFFFFF if isinstance(seed, (int, np.integer)) else 0


def save_cube(cube: DataCube, path, dtype=None) -> None:
    """Write the binary dump and a ``.json`` sidecar holding the scene."""
    data = cube.samples if dtype is None else cube.samples.astype(dtype)
    if data.dtype not in (np.complex64, np.complex128):
        raise ValueError("payload must be complex64 or complex128")
    Q, L, K, N = data.shape
    fid = 1 if cube.fidelity == "exact" else 0
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, Q, L, K, N, fid, float(cube.noise_var),
                              _header_seed(cube.seed)))
        fh.write(np.ascontiguousarray(data).astype(data.dtype.newbyteorder("<")).tobytes())
    seed = cube.seed if isinstance(cube.seed, (int, np.integer)) else list(cube.seed)
    side = {"config": cube.config.to_dict(), "noise_var": cube.noise_var, "seed": seed,
            "fidelity": cube.fidelity, "dtype": str(data.dtype)}
    if cube.scene is not None:
        side["scene"] = cube.scene.to_dict()
    if cube.amplitudes is not None:
        side["amplitudes"] = [[[z.real, z.imag] for z in row] for row in cube.amplitudes]
    with open(str(path) + ".json", "w") as fh:
        json.dump(side, fh, indent=2)


def load_cube(path, config: RadarConfig | None = None) -> DataCube:
    """Read a binary dump; the config comes from ``config`` or the sidecar."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise ConfigurationError("truncated cube header")
        magic, ver, Q, L, K, N, fid, s2, seed = _HEADER.unpack(head)
        if magic != MAGIC:
            raise ConfigurationError(f"bad magic {magic!r}")
        if ver != VERSION:
            raise ConfigurationError(f"unsupported cube version {ver}")
        payload = fh.read()
    count = Q * L * K * N
    if len(payload) == 8 * count:
        dt = np.dtype("<c8")
    elif len(payload) == 16 * count:
        dt = np.dtype("<c16")
    else:
        raise ConfigurationError("payload size does not match header dimensions")
    samples = np.frombuffer(payload, dtype=dt).reshape(Q, L, K, N).astype(dt.newbyteorder("="))
    scene = None
    amps = None
    if config is None:
        try:
            with open(str(path) + ".json") as fh:
                side = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigurationError("no config given and no sidecar found") from exc
        config = RadarConfig.from_dict(side["config"])
        if "scene" in side:
            scene = Scene.from_dict(side["scene"])
        if "amplitudes" in side:
            amps = np.array([[complex(*z) for z in row] for row in side["amplitudes"]])
    if config.shape != (Q, L, K, N):
        raise ConfigurationError("sidecar config does not match header dimensions")
    return DataCube(samples, config, s2, seed, "exact" if fid else "approx", scene, amps)
