"""Radar configuration, target geometry and model-validity checks.

All angles are radians internally. Velocities are relative to the radar
platform. The array axis is x; boresight is y; the DOA ``theta`` is measured
from boresight toward +x.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

DEFAULT_WAVE_SPEED = 2.998e8


class ConfigurationError(ValueError):
    """Raised when a configuration or target violates a structural invariant."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RadarConfig:
    """FMCW waveform, timing and array geometry.

    Parameters
    ----------
    carrier_frequency_hz, bandwidth_hz : float
        Chirp start frequency and swept bandwidth.
    chirp_duration_s, pri_s : float
        Chirp length ``T_c`` and pulse repetition interval ``T_PRI``.
    num_chirps, num_fast_samples, num_sensors_per_subarray : int
        ``K``, ``N`` and ``L``.
    subarray_separation_m : float
        Distance between subarray centres ``Dbar``. Zero selects the
        single-ULA model (one subarray).
    subarray_aperture_m : float, optional
        Aperture ``D`` of one subarray. When omitted the sensors are
        half-wavelength spaced and ``D = (L-1) * lambda / 2``. When given, the
        ``L`` sensors are spread uniformly over ``D``.
    wave_speed_mps : float
        Propagation speed ``c``.
    """

    carrier_frequency_hz: float = 77e9
    bandwidth_hz: float = 250e6
    chirp_duration_s: float = 2e-6
    pri_s: float = 20e-6
    num_chirps: int = 2500
    num_fast_samples: int = 500
    num_sensors_per_subarray: int = 50
    subarray_separation_m: float = 0.0
    subarray_aperture_m: float | None = None
    wave_speed_mps: float = DEFAULT_WAVE_SPEED

    def __post_init__(self):
        for name in ("num_chirps", "num_fast_samples", "num_sensors_per_subarray"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigurationError(f"{name} must be an integer >= 1 (got {v})")
            object.__setattr__(self, name, int(v))
        for name in ("carrier_frequency_hz", "bandwidth_hz", "chirp_duration_s",
                     "pri_s", "wave_speed_mps"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ConfigurationError(f"{name} must be finite and > 0 (got {v})")
        if not self.chirp_duration_s < self.pri_s:
            raise ConfigurationError(
                "chirp duration T_c must be shorter than the PRI "
                f"(T_c={self.chirp_duration_s}, T_PRI={self.pri_s})")
        if not (np.isfinite(self.subarray_separation_m) and self.subarray_separation_m >= 0):
            raise ConfigurationError("subarray_separation_m must be finite and >= 0")
        if self.subarray_aperture_m is not None:
            if not (np.isfinite(self.subarray_aperture_m) and self.subarray_aperture_m >= 0):
                raise ConfigurationError("subarray_aperture_m must be finite and >= 0")
            if self.num_sensors_per_subarray == 1 and self.subarray_aperture_m > 0:
                raise ConfigurationError("a single sensor cannot span a nonzero aperture")

    # -- waveform ----------------------------------------------------------
    @property
    def wavelength(self) -> float:
        return self.wave_speed_mps / self.carrier_frequency_hz

    @property
    def chirp_slope(self) -> float:
        """Chirp slope ``a`` with ``a * T_c = BW``."""
        return self.bandwidth_hz / self.chirp_duration_s

    @property
    def range_resolution(self) -> float:
        return self.wave_speed_mps / (2.0 * self.bandwidth_hz)

    @property
    def range_ambiguity(self) -> float:
        return self.wave_speed_mps * self.chirp_duration_s / 2.0

    @property
    def observation_time(self) -> float:
        """Slow-time span ``K * T_PRI``."""
        return self.num_chirps * self.pri_s

    @property
    def doppler_bin_mps(self) -> float:
        """Radial-velocity resolution ``lambda / (2 K T_PRI)``."""
        return self.wavelength / (2.0 * self.observation_time)

    @property
    def max_unambiguous_velocity(self) -> float:
        return self.wavelength / (4.0 * self.pri_s)

    # -- array ---------------------------------------------------------------
    @property
    def sensor_spacing(self) -> float:
        L = self.num_sensors_per_subarray
        if self.subarray_aperture_m is None:
            return self.wavelength / 2.0
        return self.subarray_aperture_m / (L - 1) if L > 1 else 0.0

    @property
    def aperture(self) -> float:
        """Subarray aperture ``D``."""
        return self.sensor_spacing * (self.num_sensors_per_subarray - 1)

    @property
    def num_subarrays(self) -> int:
        return 2 if self.subarray_separation_m > 0 else 1

    @property
    def is_separated(self) -> bool:
        return self.num_subarrays == 2

    @property
    def total_aperture(self) -> float:
        """Extent of all sensors, ``Dbar + D`` for separated arrays."""
        return self.subarray_separation_m + self.aperture

    @property
    def sensor_positions(self) -> np.ndarray:
        """Sensor offsets ``d_l`` relative to the subarray centre."""
        L = self.num_sensors_per_subarray
        return self.sensor_spacing * (np.arange(L) - (L - 1) / 2.0)

    def subarray_center(self, q: int) -> float:
        """``Dbar_q = Dbar (q - 1/2)``; zero in single-ULA mode."""
        if self.num_subarrays == 1:
            if q != 0:
                raise ConfigurationError(f"subarray index {q} invalid in single-ULA mode")
            return 0.0
        if q not in (0, 1):
            raise ConfigurationError(f"subarray index must be 0 or 1 (got {q})")
        return self.subarray_separation_m * (q - 0.5)

    @property
    def sensor_moment(self) -> float:
        """``D_s^2 = sum_l d_l^2``."""
        d = self.sensor_positions
        return float(np.sum(d ** 2))

    # -- grids -----------------------------------------------------------------
    @property
    def slow_time_grid(self) -> np.ndarray:
        K = self.num_chirps
        return self.pri_s * (np.arange(K) - (K - 1) / 2.0)

    @property
    def fast_time_grid(self) -> np.ndarray:
        N = self.num_fast_samples
        return (self.chirp_duration_s / N) * (np.arange(N) - (N - 1) / 2.0)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.num_subarrays, self.num_sensors_per_subarray,
                self.num_chirps, self.num_fast_samples)

    def replace(self, **changes) -> "RadarConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "carrier_frequency_hz": self.carrier_frequency_hz,
            "bandwidth_hz": self.bandwidth_hz,
            "chirp_duration_s": self.chirp_duration_s,
            "pri_s": self.pri_s,
            "num_chirps": self.num_chirps,
            "num_fast_samples": self.num_fast_samples,
            "num_sensors_per_subarray": self.num_sensors_per_subarray,
            "subarray_separation_m": self.subarray_separation_m,
            "subarray_aperture_m": self.subarray_aperture_m,
            "wave_speed_mps": self.wave_speed_mps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RadarConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown radar fields: {sorted(unknown)}")
        return cls(**d)


# ---------------------------------------------------------------------------
# targets
# ---------------------------------------------------------------------------


def derive_geometry(vx, vy, theta):
    """Rotate Cartesian velocity into radial/tangential components.

    Returns
    -------
    v_r, v_theta
        ``v_r = vx sin(theta) + vy cos(theta)`` and
        ``v_theta = vx cos(theta) - vy sin(theta)``.
    """
    s, c = np.sin(theta), np.cos(theta)
    return vx * s + vy * c, vx * c - vy * s


def cartesian_velocity(v_r, v_theta, theta):
    """Inverse of :func:`derive_geometry`."""
    s, c = np.sin(theta), np.cos(theta)
    return v_r * s + v_theta * c, v_r * c - v_theta * s


@dataclass(frozen=True)
class TargetState:
    """Point target with parameter vector ``psi = [r, v_r, v_theta, theta]``.

    ``amplitudes`` holds one complex gain per subarray (``beta`` or
    ``beta_0, beta_1``). ``None`` lets the synthesizer draw unit-modulus
    gains with random phases.
    """

    range_m: float
    radial_velocity_mps: float = 0.0
    tangential_velocity_mps: float = 0.0
    doa_rad: float = 0.0
    amplitudes: tuple[complex, ...] | None = None

    def __post_init__(self):
        if not (np.isfinite(self.range_m) and self.range_m > 0):
            raise ConfigurationError(f"range must be finite and > 0 (got {self.range_m})")
        if not (np.isfinite(self.doa_rad) and abs(self.doa_rad) < np.pi / 2):
            raise ConfigurationError(f"|theta| must be < pi/2 (got {self.doa_rad})")
        for name in ("radial_velocity_mps", "tangential_velocity_mps"):
            if not np.isfinite(getattr(self, name)):
                raise ConfigurationError(f"{name} must be finite")
        if self.amplitudes is not None:
            amps = tuple(complex(a) for a in self.amplitudes)
            if not all(np.isfinite(a.real) and np.isfinite(a.imag) for a in amps):
                raise ConfigurationError("amplitudes must be finite")
            object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_cartesian(cls, range_m, doa_rad, vx, vy, amplitudes=None):
        v_r, v_t = derive_geometry(vx, vy, doa_rad)
        return cls(range_m, float(v_r), float(v_t), doa_rad, amplitudes)

    @property
    def psi(self) -> np.ndarray:
        return np.array([self.range_m, self.radial_velocity_mps,
                         self.tangential_velocity_mps, self.doa_rad])

    @property
    def velocity_xy(self) -> tuple[float, float]:
        vx, vy = cartesian_velocity(self.radial_velocity_mps,
                                    self.tangential_velocity_mps, self.doa_rad)
        return float(vx), float(vy)

    @property
    def speed(self) -> float:
        return math.hypot(self.radial_velocity_mps, self.tangential_velocity_mps)

    def nfsa(self, cfg: RadarConfig) -> float:
        return abs(self.tangential_velocity_mps) * cfg.observation_time

    def amplitude_for(self, q: int) -> complex:
        if self.amplitudes is None:
            raise ConfigurationError("target amplitudes are not set")
        if len(self.amplitudes) == 1:
            return self.amplitudes[0]
        return self.amplitudes[q]

    def with_psi(self, psi: Sequence[float]) -> "TargetState":
        r, vr, vt, th = (float(p) for p in psi)
        return replace(self, range_m=r, radial_velocity_mps=vr,
                       tangential_velocity_mps=vt, doa_rad=th)

    def replace(self, **changes) -> "TargetState":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = {"range_m": self.range_m,
             "radial_velocity_mps": self.radial_velocity_mps,
             "tangential_velocity_mps": self.tangential_velocity_mps,
             "doa_deg": math.degrees(self.doa_rad)}
        if self.amplitudes is not None:
            d["amplitudes"] = [[a.real, a.imag] for a in self.amplitudes]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TargetState":
        d = dict(d)
        if "doa_deg" in d:
            theta = math.radians(d.pop("doa_deg"))
        else:
            theta = d.pop("doa_rad")
        amps = d.pop("amplitudes", None)
        if amps is not None:
            amps = tuple(complex(a[0], a[1]) if isinstance(a, (list, tuple)) else complex(a)
                         for a in amps)
        r = d.pop("range_m")
        if "vx_mps" in d or "vy_mps" in d:
            t = cls.from_cartesian(r, theta, d.pop("vx_mps", 0.0), d.pop("vy_mps", 0.0), amps)
        else:
            t = cls(r, d.pop("radial_velocity_mps", 0.0),
                    d.pop("tangential_velocity_mps", 0.0), theta, amps)
        if d:
            raise ConfigurationError(f"unknown target fields: {sorted(d)}")
        return t


# ---------------------------------------------------------------------------
# derived quantities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DerivedParams:
    wavelength_m: float
    range_resolution_m: float
    range_ambiguity_m: float
    nfsa_m: float
    slow_time_grid: np.ndarray = field(repr=False)
    fast_time_grid: np.ndarray = field(repr=False)
    chirp_slope: float = 0.0


def derive_params(cfg: RadarConfig, tgt: TargetState | None = None) -> DerivedParams:
    """Collect the quantities derived from ``cfg`` (and ``tgt`` for NFSA)."""
    if not isinstance(cfg, RadarConfig):
        raise ConfigurationError("cfg must be a RadarConfig")
    return DerivedParams(
        wavelength_m=cfg.wavelength,
        range_resolution_m=cfg.range_resolution,
        range_ambiguity_m=cfg.range_ambiguity,
        nfsa_m=tgt.nfsa(cfg) if tgt is not None else 0.0,
        slow_time_grid=cfg.slow_time_grid,
        fast_time_grid=cfg.fast_time_grid,
        chirp_slope=cfg.chirp_slope,
    )


# ---------------------------------------------------------------------------
# assumptions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AssumptionEntry:
    """One validity condition.

    ``sense`` is ``"<<"`` (ratio must be small), ``">>"`` (ratio must be
    large) or ``"<"`` (strict ``ratio < 1``).
    """

    name: str
    description: str
    ratio: float | None
    sense: str
    margin: float = 10.0

    @property
    def status(self) -> str:
        if self.ratio is None:
            return "not evaluated"
        if self.sense == "<<":
            ok = self.ratio < 1.0 / self.margin
        elif self.sense == ">>":
            ok = self.ratio > self.margin
        elif self.sense == "<":
            ok = self.ratio < 1.0
        else:
            raise ValueError(f"unknown sense {self.sense!r}")
        return "pass" if ok else "warn"

    @property
    def passed(self) -> bool:
        return self.status == "pass"


@dataclass(frozen=True)
class AssumptionReport:
    entries: tuple[AssumptionEntry, ...]

    def __getitem__(self, name: str) -> AssumptionEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def passes(self, names: Iterable[str] | None = None) -> bool:
        chosen = self.entries if names is None else [self[n] for n in names]
        return all(e.status != "warn" for e in chosen)

    def table(self) -> str:
        lines = [f"{'id':<4} {'ratio':>11} {'sense':>5} {'status':<13} description"]
        for e in self.entries:
            ratio = "-" if e.ratio is None else f"{e.ratio:.4g}"
            lines.append(f"{e.name:<4} {ratio:>11} {e.sense:>5} {e.status:<13} {e.description}")
        return "\n".join(lines)

    def to_dict(self) -> list[dict]:
        return [{"name": e.name, "ratio": e.ratio, "sense": e.sense,
                 "status": e.status, "description": e.description} for e in self.entries]


def check_assumptions(cfg: RadarConfig, tgt: TargetState, scene_targets=None,
                      margin: float = 10.0, a12_grid: int = 5) -> AssumptionReport:
    """Evaluate the model-validity conditions A1-A12 for one target.

    Every condition is expressed as a nonnegative ratio. ``"<<"`` entries
    pass when ``ratio < 1/margin``; A10/A11 are strict inequalities written
    as ``threshold / r < 1``.

    For separated arrays A2/A3 use the subarray aperture ``D`` (they govern
    the per-subarray model) while A6-A11 use the total extent ``Dbar + D``.

    A12 needs the other targets of the scene (``scene_targets``); it reports
    the largest normalized steering correlation between distinct targets,
    maximized over a small grid of hypothesized tangential velocities.
    """
    lam = cfg.wavelength
    dr = cfg.range_resolution
    rmax = cfg.range_ambiguity
    KT = cfg.observation_time
    r = tgt.range_m
    vr = abs(tgt.radial_velocity_mps)
    vt = abs(tgt.tangential_velocity_mps)
    vT = tgt.speed
    D = cfg.aperture
    Dt = cfg.total_aperture
    nfsa = vt * KT

    e = []
    add = lambda n, desc, ratio, sense: e.append(AssumptionEntry(n, desc, ratio, sense, margin))
    add("A1", "|v_r| K T_PRI / dr << 1 (no slow-time range migration)", vr * KT / dr, "<<")
    add("A2", "D / dr << 1 (no spatial range migration)", D / dr, "<<")
    add("A3", "D^2 / (lambda r) << 1 (far field over the aperture)", D ** 2 / (lam * r), "<<")
    add("A4", "NFSA^2 / (lambda r) << 1 (far field over the motion)", nfsa ** 2 / (lam * r), "<<")
    add("A5", "|v_r| T_c / lambda << 1 (no intra-chirp Doppler)",
        vr * cfg.chirp_duration_s / lam, "<<")
    add("A6", "(v_T K T_PRI / dr) / (r_max / r) << 1", (vT * KT / dr) * r / rmax, "<<")
    add("A7", "(D / dr) / (r_max / r) << 1", (Dt / dr) * r / rmax, "<<")
    add("A8", "v_T K T_PRI / r << 1", vT * KT / r, "<<")
    add("A9", "D / r << 1", Dt / r, "<<")
    add("A10", "5 D^2 / (2 dr) < r", 5 * Dt ** 2 / (2 * dr) / r, "<")
    add("A11", "5 NFSA^2 / (2 dr) < r", 5 * nfsa ** 2 / (2 * dr) / r, "<")

    ratio12 = None
    if scene_targets is not None and len(scene_targets) > 1:
        from .ambiguity import steering_correlation
        ratio12 = 0.0
        targets = list(scene_targets)
        vgrid = np.linspace(-1.0, 1.0, a12_grid)
        for i in range(len(targets)):
            for p in range(i + 1, len(targets)):
                ti, tp = targets[i], targets[p]
                span_i = max(abs(ti.tangential_velocity_mps), 5.0)
                span_p = max(abs(tp.tangential_velocity_mps), 5.0)
                for a in vgrid:
                    for b in vgrid:
                        psi_i = ti.psi.copy(); psi_i[2] = a * 2 * span_i
                        psi_p = tp.psi.copy(); psi_p[2] = b * 2 * span_p
                        ratio12 = max(ratio12, steering_correlation(cfg, psi_i, psi_p))
    add("A12", "max normalized |a^H(psi_i) a(psi_p)| << 1 over v_theta", ratio12, "<<")
    return AssumptionReport(tuple(e))


# ---------------------------------------------------------------------------
# scenes
# ---------------------------------------------------------------------------

MODES = ("conventional", "ula_nearfield", "ula_full", "separated")
FIDELITIES = ("approx", "exact")


@dataclass(frozen=True)
class Scene:
    """Radar configuration plus targets and noise level.

    ``mode`` selects the signal model used for synthesis; ``None`` picks
    ``"separated"`` when the config has two subarrays and
    ``"ula_nearfield"`` otherwise.
    """

    config: RadarConfig
    targets: tuple[TargetState, ...] = ()
    snr_db: float = 20.0
    seed: int = 0
    mode: str | None = None
    fidelity: str = "approx"
    coherent: bool = False

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        if self.mode is not None and self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES} (got {self.mode!r})")
        if self.fidelity not in FIDELITIES:
            raise ConfigurationError(f"fidelity must be one of {FIDELITIES}")
        if np.isnan(self.snr_db) or self.snr_db == -np.inf:
            raise ConfigurationError("SNR must be a number or +inf (noiseless)")
        if self.resolved_mode == "separated" and not self.config.is_separated:
            raise ConfigurationError("separated mode needs subarray_separation_m > 0")
        if self.resolved_mode != "separated" and self.config.is_separated:
            raise ConfigurationError(
                f"mode {self.resolved_mode!r} needs a single-ULA config (Dbar = 0)")

    @property
    def resolved_mode(self) -> str:
        if self.mode is not None:
            return self.mode
        return "separated" if self.config.is_separated else "ula_nearfield"

    def replace(self, **changes) -> "Scene":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {"radar": self.config.to_dict(),
                "targets": [t.to_dict() for t in self.targets],
                "snr_db": self.snr_db, "seed": self.seed, "mode": self.resolved_mode,
                "fidelity": self.fidelity, "coherent": self.coherent}

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        d = dict(d)
        try:
            cfg = RadarConfig.from_dict(d.pop("radar"))
            targets = tuple(TargetState.from_dict(t) for t in d.pop("targets", []))
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed scenario: missing or bad field {exc}") from exc
        scene = cls(cfg, targets, snr_db=float(d.pop("snr_db", 20.0)),
                    seed=int(d.pop("seed", 0)), mode=d.pop("mode", None),
                    fidelity=d.pop("fidelity", "approx"),
                    coherent=bool(d.pop("coherent", False)))
        if d:
            raise ConfigurationError(f"unknown scene fields: {sorted(d)}")
        return scene

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def load_scene(path) -> Scene:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"scenario file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict) or "radar" not in data:
        raise ConfigurationError("scenario file needs a 'radar' block")
    return Scene.from_dict(data)


def save_scene(scene: Scene, path) -> None:
    with open(path, "w") as fh:
        fh.write(scene.to_json())
