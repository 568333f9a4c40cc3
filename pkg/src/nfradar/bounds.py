"""Fisher information and Cramér-Rao bounds for the tangential velocity."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .scenario import RadarConfig, TargetState
from .synth import PARAMS, model_for, noise_variance, phase_terms, steering_tensor

ULA_ORDER = ("beta_r", "beta_i", "r", "v_r", "v_theta", "theta")
SEPARATED_ORDER = ("beta0_r", "beta0_i", "beta1_r", "beta1_i", "r", "v_r", "v_theta", "theta")


class UnboundedCRBError(ValueError):
    """The closed-form bound is infinite (no tangential-velocity information)."""


@dataclass
class FimReport:
    """Fisher information for ``xi = [beta..., r, v_r, v_theta, theta]``.

    Attributes
    ----------
    crb_vtheta_numeric : float
        ``[J^-1]`` at the ``v_theta`` position (all other parameters nuisance).
    crb_vtheta_beta_only : float
        Bound obtained by treating only the gains as nuisance, i.e. the Schur
        complement of the gain block in the ``(beta, v_theta)`` sub-matrix.
    crb_vtheta_closed : float
        Large-``K`` closed form; ``inf`` when no P-term is positive.
    """

    order: tuple
    fim: np.ndarray
    crb: np.ndarray
    crb_vtheta_numeric: float
    crb_vtheta_beta_only: float
    crb_vtheta_closed: float
    p_terms: dict
    snr: float
    noise_var: float
    ill_conditioned: bool = False
    notes: list = field(default_factory=list)

    def index(self, name: str) -> int:
        return self.order.index(name)


def _amplitudes(cfg: RadarConfig, tgt: TargetState) -> np.ndarray:
    Q = cfg.num_subarrays
    if tgt.amplitudes is None:
        return np.ones(Q, dtype=complex)
    a = np.asarray(tgt.amplitudes, dtype=complex)
    return np.full(Q, a[0]) if a.size == 1 else a[:Q]


def _resolve_noise(cfg, tgt, snr_db, noise_var) -> float:
    if noise_var is None:
        if snr_db is None:
            raise ValueError("give snr_db or noise_var")
        noise_var = noise_variance(cfg, snr_db)
    if not noise_var > 0:
        raise ValueError("noise variance must be > 0")
    return float(noise_var)


def phase_derivative_moments(cfg: RadarConfig, psi, model: str, q: int = 0,
                             chunk: int = 1 << 21):
    """Sums ``S_im = sum D_i D_m`` and ``s_i = sum D_i`` of phase derivatives.

    ``D_i`` is the derivative of the total steering phase with respect to
    parameter ``i`` in :data:`PARAMS`. Accumulated over chirp chunks.
    """
    terms = phase_terms(cfg, psi, model, q)
    L, K, N = cfg.num_sensors_per_subarray, cfg.num_chirps, cfg.num_fast_samples
    grads = {p: [t.grad[p] for t in terms if p in t.grad] for p in PARAMS}
    S = np.zeros((4, 4))
    s = np.zeros(4)
    kc = max(1, chunk // (L * N))
    for k0 in range(0, K, kc):
        k1 = min(K, k0 + kc)
        rows = []
        for p in PARAMS:
            acc = np.zeros((L, k1 - k0, N))
            for g in grads[p]:
                acc += g[:, k0:k1, :] if g.shape[1] != 1 else g
            rows.append(acc.reshape(-1))
        A = np.vstack(rows)
        S += A @ A.T
        s += A.sum(axis=1)
    return S, s


def _safe_inverse(J: np.ndarray):
    d = np.sqrt(np.abs(np.diag(J)))
    d[d == 0] = 1.0
    Jn = J / np.outer(d, d)
    cond = np.linalg.cond(Jn)
    if not np.isfinite(cond) or cond > 1e12:
        return np.linalg.pinv(Jn) / np.outer(d, d), True
    return np.linalg.inv(Jn) / np.outer(d, d), False


def p_terms(cfg: RadarConfig, tgt: TargetState) -> dict:
    th = tgt.doa_rad
    L = cfg.num_sensors_per_subarray
    Ds2 = cfg.sensor_moment
    P1 = 8.0 * tgt.nfsa(cfg) ** 2 / 45.0
    P2 = 2.0 * Ds2 * math.cos(th) ** 2 / (3.0 * L)
    P3 = cfg.subarray_separation_m ** 2 * math.cos(th) ** 2 / 6.0 if cfg.is_separated else 0.0
    return {"P1": P1, "P2": P2, "P3": P3, "Ds2": Ds2}


def snr_linear(cfg: RadarConfig, tgt: TargetState, noise_var: float) -> float:
    """``L N K sum_q |beta_q|^2 / sigma^2``."""
    L, K, N = cfg.num_sensors_per_subarray, cfg.num_chirps, cfg.num_fast_samples
    return L * N * K * float(np.sum(np.abs(_amplitudes(cfg, tgt)) ** 2)) / noise_var


def crb_vtheta_closed(cfg: RadarConfig, tgt: TargetState, snr_db: float | None = None,
                      noise_var: float | None = None, exponent: int = 2) -> float:
    """Large-``K`` closed-form bound on ``var(v_theta)`` in (m/s)^2.

    ``r^2 lambda^2 / (pi^2 (K T_PRI)^exponent (P1 + P2 + P3) SNR)`` with
    ``P3 = 0`` for a single ULA. ``exponent=1`` reproduces a misprinted
    variant of the separated-array formula for comparison only.

    ``snr_db`` is interpreted as the SNR definition itself; ``noise_var``
    derives it from the target gains.
    """
    if cfg.num_chirps < 100:
        warnings.warn("closed-form CRB assumes large K (K >= 100)", RuntimeWarning, stacklevel=2)
    if snr_db is not None:
        snr = 10.0 ** (snr_db / 10.0)
    else:
        snr = snr_linear(cfg, tgt, _resolve_noise(cfg, tgt, None, noise_var))
    P = p_terms(cfg, tgt)
    psum = P["P1"] + P["P2"] + P["P3"]
    if psum <= 0:
        raise UnboundedCRBError("P1 + P2 + P3 = 0: the tangential velocity is unidentifiable")
    r, lam, KT = tgt.range_m, cfg.wavelength, cfg.observation_time
    return r ** 2 * lam ** 2 / (math.pi ** 2 * KT ** exponent * psum * snr)


def fim_numeric(cfg: RadarConfig, tgt: TargetState, snr_db: float | None = None,
                noise_var: float | None = None, model: str | None = None) -> FimReport:
    """Fisher information from analytic phase derivatives.

    Separated arrays stack both subarrays with independent gains; the cross
    gain blocks are zero. ``model`` defaults to the separated model for
    two-subarray configs and to ``ula_nearfield`` otherwise.
    """
    model = model_for(cfg, model)
    s2 = _resolve_noise(cfg, tgt, snr_db, noise_var)
    beta = _amplitudes(cfg, tgt)
    if np.any(beta == 0):
        raise ValueError("amplitudes must be nonzero")
    Q = cfg.num_subarrays
    L, K, N = cfg.num_sensors_per_subarray, cfg.num_chirps, cfg.num_fast_samples
    M = L * K * N
    nb = 2 * Q
    J = np.zeros((nb + 4, nb + 4))
    for q in range(Q):
        S, s = phase_derivative_moments(cfg, tgt.psi, model, q)
        b = beta[q]
        J[nb:, nb:] += (2.0 / s2) * abs(b) ** 2 * S
        i = 2 * q
        J[i, i] = J[i + 1, i + 1] = 2.0 * M / s2
        J[i, nb:] = J[nb:, i] = (2.0 / s2) * (-b.imag) * s
        J[i + 1, nb:] = J[nb:, i + 1] = (2.0 / s2) * b.real * s
    C, ill = _safe_inverse(J)
    iv = nb + 2
    sub = np.ix_(list(range(nb)) + [iv], list(range(nb)) + [iv])
    Cb, _ = _safe_inverse(J[sub])
    try:
        closed = crb_vtheta_closed(cfg, tgt, noise_var=s2)
    except UnboundedCRBError:
        closed = math.inf
    order = SEPARATED_ORDER if Q == 2 else ULA_ORDER
    notes = ["pseudo-inverse used (ill-conditioned FIM)"] if ill else []
    return FimReport(order, J, C, float(C[iv, iv]), float(Cb[-1, -1]), closed,
                     p_terms(cfg, tgt), snr_linear(cfg, tgt, s2), s2, ill, notes)


def fim_finite_difference(cfg: RadarConfig, tgt: TargetState, snr_db: float | None = None,
                          noise_var: float | None = None, model: str | None = None,
                          rel_step: float = 1e-4) -> np.ndarray:
    """Fisher information from central differences of the noiseless mean.

    Only steering *values* are used; step sizes are ``rel_step`` times a
    natural resolution scale of each parameter. This is the reference for
    :func:`fim_numeric`.
    """
    model = model_for(cfg, model)
    s2 = _resolve_noise(cfg, tgt, snr_db, noise_var)
    beta = _amplitudes(cfg, tgt)
    Q = cfg.num_subarrays
    L = cfg.num_sensors_per_subarray
    scales = {"r": cfg.range_resolution,
              "v_r": cfg.doppler_bin_mps,
              "v_theta": 1.0,
              "theta": 2.0 / max(L, 1)}
    psi0 = tgt.psi
    nb = 2 * Q
    cols = [[] for _ in range(nb + 4)]
    for q in range(Q):
        a = steering_tensor(cfg, psi0, model, q).reshape(-1)
        for j in range(Q):
            z = a if j == q else np.zeros_like(a)
            cols[2 * j].append(z)
            cols[2 * j + 1].append(1j * z)
        for i, p in enumerate(PARAMS):
            h = rel_step * scales[p]
            up, dn = psi0.copy(), psi0.copy()
            up[i] += h
            dn[i] -= h
            mu_up = beta[q] * steering_tensor(cfg, up, model, q).reshape(-1)
            mu_dn = beta[q] * steering_tensor(cfg, dn, model, q).reshape(-1)
            cols[nb + i].append((mu_up - mu_dn) / (2 * h))
    D = np.stack([np.concatenate(c) for c in cols])
    return (2.0 / s2) * np.real(np.conj(D) @ D.T)


def normalized_difference(J1: np.ndarray, J2: np.ndarray) -> np.ndarray:
    """``|J1 - J2| / sqrt(J1_ii J1_mm)`` entrywise."""
    d = np.sqrt(np.abs(np.diag(J1)))
    return np.abs(J1 - J2) / np.outer(d, d)
