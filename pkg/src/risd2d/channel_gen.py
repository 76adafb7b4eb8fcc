"""Scenario geometry, multi-tap channel synthesis and CSI error injection.

Every tap response is collapsed to one flat gain by coherent summation of
the tap amplitudes, so a link keeps its per-tap fading statistics and its
total path-loss power. Random streams are keyed by (seed, link class,
index): adding users, antennas or RIS elements leaves the draws of the
other links unchanged, which keeps sweeps over N, M, J on common random
numbers.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core_model import Cascades, ChannelSet, ConfigurationError, ScenarioConfig

# stream tags
_CU_POS, _DT_POS, _DR_POS = 1, 2, 3
_G_CU, _G_D2D, _F_CU_DR, _F_DT_BS = 11, 12, 13, 14
_S_CU, _S_BS, _S_DT, _S_DR = 21, 22, 23, 24
_ERR = 31


@dataclass(frozen=True)
class FadingConfig:
    """Tap counts, path-loss exponents and Rician factor of the link classes."""

    taps_direct: int = 16
    taps_ris: int = 4
    taps_user: int = 16
    pathloss_exp_bs_user: float = 3.8
    pathloss_exp_ris: float = 2.2
    pathloss_exp_user_user: float = 4.0
    rician_factor_ris_db: float = 10.0
    reference_loss_db: float = 0.0
    wavelength: float = 0.15
    min_distance: float = 1.0

    def __post_init__(self):
        if min(self.taps_direct, self.taps_ris, self.taps_user) < 1:
            raise ConfigurationError("tap counts must be >= 1")
        if min(self.pathloss_exp_bs_user, self.pathloss_exp_ris,
               self.pathloss_exp_user_user) <= 0:
            raise ConfigurationError("path-loss exponents must be positive")

    @property
    def rician_factor(self) -> float:
        return 10.0 ** (self.rician_factor_ris_db / 10.0)


@dataclass
class Geometry:
    bs: np.ndarray    # (2,)
    cu: np.ndarray    # (K, 2)
    dt: np.ndarray    # (J, 2)
    dr: np.ndarray    # (J, 2)
    ris: np.ndarray   # (L, 2)


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, *key])


def generate_geometry(cfg: ScenarioConfig, seed: int | None = None) -> Geometry:
    """Place CUs in the edge ring, DTs in the cell and DRs around their DT."""
    seed = cfg.rng_seed if seed is None else seed
    K, J = cfg.num_cu, cfg.num_d2d
    cu = np.empty((K, 2))
    if cfg.cu_positions is not None:
        cu[:] = np.asarray(cfg.cu_positions, dtype=float)
    else:
        lo, hi = cfg.cu_ring
        for k in range(K):
            u, t = _rng(seed, _CU_POS, k).random(2)
            r = np.sqrt(lo ** 2 + u * (hi ** 2 - lo ** 2))
            cu[k] = r * np.cos(2 * np.pi * t), r * np.sin(2 * np.pi * t)
    dt = np.empty((J, 2))
    if cfg.dt_positions is not None:
        dt[:] = np.asarray(cfg.dt_positions, dtype=float)
    else:
        for j in range(J):
            u, t = _rng(seed, _DT_POS, j).random(2)
            r = cfg.cell_radius * np.sqrt(u)
            dt[j] = r * np.cos(2 * np.pi * t), r * np.sin(2 * np.pi * t)
    dr = np.empty((J, 2))
    d_lo, d_hi = cfg.d2d_distance
    for j in range(J):
        u, t = _rng(seed, _DR_POS, j).random(2)
        d = d_lo + u * (d_hi - d_lo)
        dr[j] = dt[j] + d * np.array([np.cos(2 * np.pi * t), np.sin(2 * np.pi * t)])
    ris = np.asarray(cfg.ris_positions, dtype=float).reshape(-1, 2)
    return Geometry(bs=np.zeros(2), cu=cu, dt=dt, dr=dr, ris=ris)


def pathloss(distance, exponent: float, fading: FadingConfig):
    """Large-scale power gain: reference loss at 1 m times d^-exponent."""
    d = np.maximum(np.asarray(distance, dtype=float), fading.min_distance)
    return 10.0 ** (-fading.reference_loss_db / 10.0) * d ** (-exponent)


def ula_response(sin_angle, size: int) -> np.ndarray:
    """Half-wavelength ULA response; broadcasts over a leading angle axis."""
    s = np.asarray(sin_angle, dtype=float)[..., None]
    return np.exp(1j * np.pi * np.arange(size) * s)


def _cn(rng: np.random.Generator, size) -> np.ndarray:
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2.0)


def rayleigh_scalar(rng, power: float, taps: int, samples: int | None = None):
    """Sum of ``taps`` Rayleigh taps with total mean power ``power``."""
    shape = (taps,) if samples is None else (samples, taps)
    alpha = _cn(rng, shape) * np.sqrt(power / taps)
    return alpha.sum(axis=-1)


def rayleigh_vector(rng, power: float, taps: int, size: int, samples: int | None = None):
    """Array channel of ``taps`` Rayleigh taps with uniform angles of arrival."""
    shape = (taps,) if samples is None else (samples, taps)
    alpha = _cn(rng, shape) * np.sqrt(power / taps)
    sin_aoa = np.sin(rng.uniform(0.0, 2 * np.pi, shape))
    return np.einsum("...t,...tn->...n", alpha, ula_response(sin_aoa, size))


def _rician_parts(rng, taps: int, kappa: float, shape_extra=()):
    alpha = _cn(rng, shape_extra + (taps,)) * np.sqrt(1.0 / (taps * (kappa + 1.0)))
    return alpha, np.sqrt(kappa / (kappa + 1.0))


def rician_vector(rng, power: float, taps: int, kappa: float, size: int,
                  sin_los: float, los_phase: float):
    """RIS-side vector: deterministic LoS component plus scattered taps."""
    alpha, los_amp = _rician_parts(rng, taps, kappa)
    sin_nlos = np.sin(rng.uniform(0.0, 2 * np.pi, taps))
    nlos = alpha @ ula_response(sin_nlos, size)
    los = los_amp * np.exp(1j * los_phase) * ula_response(sin_los, size)
    return np.sqrt(power) * (los + nlos)


def rician_matrix(rng, power: float, taps: int, kappa: float, rows: int, cols: int,
                  sin_los_rx: float, sin_los_tx: float, los_phase: float):
    """RIS -> BS matrix as a sum of rank-one arrival/departure products."""
    alpha, los_amp = _rician_parts(rng, taps, kappa)
    sin_rx = np.sin(rng.uniform(0.0, 2 * np.pi, taps))
    sin_tx = np.sin(rng.uniform(0.0, 2 * np.pi, taps))
    nlos = np.einsum("t,tm,tn->mn", alpha, ula_response(sin_rx, rows), ula_response(sin_tx, cols))
    los = los_amp * np.exp(1j * los_phase) * np.outer(
        ula_response(sin_los_rx, rows), ula_response(sin_los_tx, cols))
    return np.sqrt(power) * (los + nlos)


def _ris_frame(ris_pos: np.ndarray):
    """Unit tangent of a RIS whose broadside faces the BS at the origin."""
    n = -ris_pos / max(np.linalg.norm(ris_pos), 1e-12)
    return np.array([-n[1], n[0]])


def _sin_from(origin, axis, target) -> float:
    d = np.asarray(target, dtype=float) - origin
    nrm = np.linalg.norm(d)
    return 0.0 if nrm == 0 else float(axis @ d / nrm)


def generate_channels(cfg: ScenarioConfig, geometry: Geometry | None = None,
                      fading: FadingConfig | None = None,
                      seed: int | None = None) -> ChannelSet:
    """Draw one channel realization for ``cfg`` (optionally on a given geometry)."""
    fading = fading or FadingConfig()
    seed = cfg.rng_seed if seed is None else seed
    geo = geometry if geometry is not None else generate_geometry(cfg, seed)
    K, J, M, N = cfg.num_cu, cfg.num_d2d, cfg.bs_antennas, cfg.elements_per_ris
    L = geo.ris.shape[0]
    x_axis = np.array([1.0, 0.0])
    kappa = fading.rician_factor
    lam = fading.wavelength

    def dist(a, b):
        return float(np.linalg.norm(np.asarray(a) - np.asarray(b)))

    g_cu_bs = np.empty((K, M), complex)
    for k in range(K):
        pl = pathloss(dist(geo.cu[k], geo.bs), fading.pathloss_exp_bs_user, fading)
        g_cu_bs[k] = rayleigh_vector(_rng(seed, _G_CU, k), pl, fading.taps_direct, M)
    f_dt_bs = np.empty((J, M), complex)
    for j in range(J):
        pl = pathloss(dist(geo.dt[j], geo.bs), fading.pathloss_exp_bs_user, fading)
        f_dt_bs[j] = rayleigh_vector(_rng(seed, _F_DT_BS, j), pl, fading.taps_direct, M)
    g_d2d = np.empty(J, complex)
    for j in range(J):
        pl = pathloss(dist(geo.dt[j], geo.dr[j]), fading.pathloss_exp_user_user, fading)
        g_d2d[j] = rayleigh_scalar(_rng(seed, _G_D2D, j), pl, fading.taps_user)
    f_cu_dr = np.empty((K, J), complex)
    for k in range(K):
        for j in range(J):
            pl = pathloss(dist(geo.cu[k], geo.dr[j]), fading.pathloss_exp_user_user, fading)
            f_cu_dr[k, j] = rayleigh_scalar(_rng(seed, _F_CU_DR, k, j), pl, fading.taps_user)

    s_cu_ris = np.empty((L, K, N), complex)
    s_dt_ris = np.empty((L, J, N), complex)
    s_ris_dr = np.empty((L, J, N), complex)
    s_ris_bs = np.empty((L, M, N), complex)
    a_ris = fading.pathloss_exp_ris
    for l in range(L):
        pos = geo.ris[l]
        tangent = _ris_frame(pos)

        def ris_link(tag, idx, node):
            d = dist(pos, node)
            return rician_vector(_rng(seed, tag, l, idx), pathloss(d, a_ris, fading),
                                 fading.taps_ris, kappa, N, _sin_from(pos, tangent, node),
                                 -2 * np.pi * d / lam)

        for k in range(K):
            s_cu_ris[l, k] = ris_link(_S_CU, k, geo.cu[k])
        for j in range(J):
            s_dt_ris[l, j] = ris_link(_S_DT, j, geo.dt[j])
            s_ris_dr[l, j] = ris_link(_S_DR, j, geo.dr[j])
        d = dist(pos, geo.bs)
        s_ris_bs[l] = rician_matrix(
            _rng(seed, _S_BS, l), pathloss(d, a_ris, fading), fading.taps_ris, kappa, M, N,
            _sin_from(geo.bs, x_axis, pos), _sin_from(pos, tangent, geo.bs), -2 * np.pi * d / lam)

    return ChannelSet(g_cu_bs=g_cu_bs, g_d2d=g_d2d, f_cu_dr=f_cu_dr, f_dt_bs=f_dt_bs,
                      s_cu_ris=s_cu_ris, s_ris_bs=s_ris_bs, s_dt_ris=s_dt_ris,
                      s_ris_dr=s_ris_dr, noise_dr=cfg.noise_dr, noise_bs=cfg.noise_bs)


def generate_scenario(cfg: ScenarioConfig, fading: FadingConfig | None = None,
                      seed: int | None = None) -> tuple[Geometry, ChannelSet]:
    seed = cfg.rng_seed if seed is None else seed
    geo = generate_geometry(cfg, seed)
    return geo, generate_channels(cfg, geo, fading, seed)


@dataclass(frozen=True)
class CsiErrorModel:
    """Per-element variances of the estimation errors, one per link class.

    g_cu: CU->BS, g_d2d: DT->DR, f_cu_dr: CU->DR, f_dt_bs: DT->BS,
    q1: DT->RIS->DR cascade, q2: CU->RIS->DR cascade,
    Q1: CU->RIS->BS cascade, Q2: DT->RIS->BS cascade.
    """

    g_cu: float = 0.0
    g_d2d: float = 0.0
    f_cu_dr: float = 0.0
    f_dt_bs: float = 0.0
    q1: float = 0.0
    q2: float = 0.0
    Q1: float = 0.0
    Q2: float = 0.0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise ConfigurationError(f"CSI error variance {name} must be >= 0")

    def scaled(self, factor: float) -> "CsiErrorModel":
        return CsiErrorModel(**{k: v * factor for k, v in self.__dict__.items()})

    @classmethod
    def relative(cls, channels: ChannelSet, ratio: float) -> "CsiErrorModel":
        """Variances set to ``ratio`` times the mean per-entry power of each class."""
        c = channels.cascades()

        def p(x):
            return float(np.mean(np.abs(x) ** 2)) if x.size else 0.0

        return cls(g_cu=ratio * p(channels.g_cu_bs), g_d2d=ratio * p(channels.g_d2d),
                   f_cu_dr=ratio * p(channels.f_cu_dr), f_dt_bs=ratio * p(channels.f_dt_bs),
                   q1=ratio * p(c.d2d), q2=ratio * p(c.cu_dr),
                   Q1=ratio * p(c.cu_bs), Q2=ratio * p(c.dt_bs))


def apply_csi_error(true_channels: ChannelSet, model: CsiErrorModel,
                    seed: int = 0) -> tuple[ChannelSet, ChannelSet]:
    """Split true channels into (estimate, error) with estimate = true - error.

    Errors on the RIS paths are drawn on the cascaded channels directly, so
    both returned sets carry explicit cascades.
    """
    rng = _rng(seed, _ERR)
    ch = true_channels
    casc = ch.cascades()

    def err(var, shape):
        if var == 0.0:
            return np.zeros(shape, complex)
        return np.sqrt(var) * _cn(rng, shape)

    e_casc = Cascades(d2d=err(model.q1, casc.d2d.shape), cu_dr=err(model.q2, casc.cu_dr.shape),
                      cu_bs=err(model.Q1, casc.cu_bs.shape), dt_bs=err(model.Q2, casc.dt_bs.shape))
    zeros = {n: np.zeros_like(getattr(ch, n)) for n in ("s_cu_ris", "s_ris_bs", "s_dt_ris", "s_ris_dr")}
    error = ChannelSet(g_cu_bs=err(model.g_cu, ch.g_cu_bs.shape), g_d2d=err(model.g_d2d, ch.g_d2d.shape),
                       f_cu_dr=err(model.f_cu_dr, ch.f_cu_dr.shape),
                       f_dt_bs=err(model.f_dt_bs, ch.f_dt_bs.shape),
                       noise_dr=ch.noise_dr, noise_bs=ch.noise_bs,
                       cascades_override=e_casc, **zeros)
    estimate = replace(ch, g_cu_bs=ch.g_cu_bs - error.g_cu_bs, g_d2d=ch.g_d2d - error.g_d2d,
                       f_cu_dr=ch.f_cu_dr - error.f_cu_dr, f_dt_bs=ch.f_dt_bs - error.f_dt_bs,
                       cascades_override=casc - e_casc)
    return estimate, error
