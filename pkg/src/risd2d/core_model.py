"""Domain types and SINR/rate evaluation for the RIS-assisted D2D uplink.

Array layout used throughout the package (K CUs, J D2D pairs, L RISs with
N elements each, M BS antennas):

    g_cu_bs   (K, M)     CU -> BS direct
    g_d2d     (J,)       DT -> DR direct
    f_cu_dr   (K, J)     CU -> DR interference
    f_dt_bs   (J, M)     DT -> BS interference
    s_cu_ris  (L, K, N)  CU -> RIS
    s_ris_bs  (L, M, N)  RIS -> BS
    s_dt_ris  (L, J, N)  DT -> RIS
    s_ris_dr  (L, J, N)  RIS -> DR

The phase vector ``phi`` stacks the per-RIS reflection vectors, so element
``l * N + n`` is the coefficient of element ``n`` of RIS ``l``. Rates are in
nats.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

UNIT_MODULUS_TOL = 1e-12
QOS_TOL = 1e-7

DEFAULT_RIS_POSITIONS = ((0.0, 500.0), (500.0, 0.0), (0.0, -500.0), (-500.0, 0.0))


class ConfigurationError(ValueError):
    """Raised for inconsistent dimensions or invalid scenario parameters."""


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass
class ScenarioConfig:
    """Geometry, counts, power limits and noise of one scenario.

    The defaults reproduce the multi-user setting of the simulation study:
    K=3 CUs, J=2 D2D pairs, 4 RISs of 10 elements at the cell edge, M=4,
    P = 20 mW, noise -115 dB and an SINR threshold of 0.5.
    """

    num_cu: int = 3
    num_d2d: int = 2
    elements_per_ris: int = 10
    bs_antennas: int = 4
    p_max_cu: float = 0.02
    p_max_d2d: float = 0.02
    noise_dr: float = db_to_linear(-115.0)
    noise_bs: float = db_to_linear(-115.0)
    qos_threshold: float = 0.5
    cell_radius: float = 500.0
    ris_positions: Sequence[Sequence[float]] = DEFAULT_RIS_POSITIONS
    cu_ring: tuple[float, float] = (400.0, 500.0)
    d2d_distance: tuple[float, float] = (10.0, 30.0)
    rng_seed: int = 0
    # Optional fixed placements; random placement is used when None.
    cu_positions: Optional[Sequence[Sequence[float]]] = None
    dt_positions: Optional[Sequence[Sequence[float]]] = None

    def __post_init__(self):
        self.ris_positions = tuple(tuple(float(c) for c in p) for p in self.ris_positions)
        self.cu_ring = tuple(float(x) for x in self.cu_ring)
        self.d2d_distance = tuple(float(x) for x in self.d2d_distance)
        self.validate()

    @property
    def num_ris(self) -> int:
        return len(self.ris_positions)

    @property
    def num_elements(self) -> int:
        """Total number of reflecting elements N*L."""
        return self.num_ris * self.elements_per_ris

    def validate(self):
        if not (self.num_cu >= self.num_d2d >= 1):
            raise ConfigurationError(
                f"need K >= J >= 1, got K={self.num_cu}, J={self.num_d2d}")
        if self.bs_antennas < 1 or self.elements_per_ris < 0:
            raise ConfigurationError("antenna and element counts must be non-negative")
        for name in ("p_max_cu", "p_max_d2d", "noise_dr", "noise_bs", "cell_radius"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be strictly positive")
        if self.qos_threshold < 0:
            raise ConfigurationError("qos_threshold must be >= 0")
        lo, hi = self.cu_ring
        if not 0 <= lo <= hi:
            raise ConfigurationError(f"bad cu_ring {self.cu_ring}")
        lo, hi = self.d2d_distance
        if not 0 < lo <= hi:
            raise ConfigurationError(f"bad d2d_distance {self.d2d_distance}")
        if self.cu_positions is not None and len(self.cu_positions) != self.num_cu:
            raise ConfigurationError("cu_positions must have K entries")
        if self.dt_positions is not None and len(self.dt_positions) != self.num_d2d:
            raise ConfigurationError("dt_positions must have J entries")


@dataclass
class Cascades:
    """RIS-cascaded channels in stacked form.

    Each array maps the phase vector to the reflected part of one effective
    channel by a plain product, e.g. ``h_d2d[j] = g_d2d[j] + d2d[j] @ phi``.

    d2d    (J, NL)      DT j -> RIS -> DR j
    cu_dr  (K, J, NL)   CU k -> RIS -> DR j
    cu_bs  (K, M, NL)   CU k -> RIS -> BS
    dt_bs  (J, M, NL)   DT j -> RIS -> BS
    """

    d2d: np.ndarray
    cu_dr: np.ndarray
    cu_bs: np.ndarray
    dt_bs: np.ndarray

    def __sub__(self, other: "Cascades") -> "Cascades":
        return Cascades(self.d2d - other.d2d, self.cu_dr - other.cu_dr,
                        self.cu_bs - other.cu_bs, self.dt_bs - other.dt_bs)


@dataclass
class ChannelSet:
    """All direct and RIS-related complex gains of one realization.

    ``noise_dr`` and ``noise_bs`` travel with the channels so that every
    evaluation has the noise floor it was generated for. When
    ``cascades_override`` is set it replaces the products of the per-hop RIS
    channels; this is how estimated channels with errors drawn directly on
    the cascaded quantities are represented.
    """

    g_cu_bs: np.ndarray
    g_d2d: np.ndarray
    f_cu_dr: np.ndarray
    f_dt_bs: np.ndarray
    s_cu_ris: np.ndarray
    s_ris_bs: np.ndarray
    s_dt_ris: np.ndarray
    s_ris_dr: np.ndarray
    noise_dr: float
    noise_bs: float
    cascades_override: Optional[Cascades] = None
    _cascades: Optional[Cascades] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("g_cu_bs", "g_d2d", "f_cu_dr", "f_dt_bs",
                     "s_cu_ris", "s_ris_bs", "s_dt_ris", "s_ris_dr"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=complex))
        self.validate()

    @property
    def num_cu(self) -> int:
        return self.g_cu_bs.shape[0]

    @property
    def num_d2d(self) -> int:
        return self.g_d2d.shape[0]

    @property
    def bs_antennas(self) -> int:
        return self.g_cu_bs.shape[1]

    @property
    def num_ris(self) -> int:
        return self.s_ris_bs.shape[0]

    @property
    def elements_per_ris(self) -> int:
        return self.s_ris_bs.shape[2]

    @property
    def num_elements(self) -> int:
        return self.num_ris * self.elements_per_ris

    def validate(self):
        K, M = self.g_cu_bs.shape if self.g_cu_bs.ndim == 2 else (None, None)
        if K is None:
            raise ConfigurationError("g_cu_bs must be (K, M)")
        J = self.g_d2d.shape[0] if self.g_d2d.ndim == 1 else None
        if J is None:
            raise ConfigurationError("g_d2d must be (J,)")
        if self.s_ris_bs.ndim != 3 or self.s_ris_bs.shape[1] != M:
            raise ConfigurationError("s_ris_bs must be (L, M, N)")
        L, _, N = self.s_ris_bs.shape
        expected = {
            "f_cu_dr": (K, J), "f_dt_bs": (J, M), "s_cu_ris": (L, K, N),
            "s_dt_ris": (L, J, N), "s_ris_dr": (L, J, N),
        }
        for name, shape in expected.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ConfigurationError(f"{name} has shape {got}, expected {shape}")
        for name in ("g_cu_bs", "g_d2d", "f_cu_dr", "f_dt_bs",
                     "s_cu_ris", "s_ris_bs", "s_dt_ris", "s_ris_dr"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ConfigurationError(f"{name} has non-finite entries")
        if not (self.noise_dr > 0 and self.noise_bs > 0):
            raise ConfigurationError("noise powers must be positive")
        if self.cascades_override is not None:
            c = self.cascades_override
            NL = L * N
            shapes = {"d2d": (J, NL), "cu_dr": (K, J, NL), "cu_bs": (K, M, NL),
                      "dt_bs": (J, M, NL)}
            for name, shape in shapes.items():
                if getattr(c, name).shape != shape:
                    raise ConfigurationError(f"cascade {name} must be {shape}")

    def cascades(self) -> Cascades:
        if self.cascades_override is not None:
            return self.cascades_override
        if self._cascades is None:
            self._cascades = cascade_products(self)
        return self._cascades


def _stack(x: np.ndarray) -> np.ndarray:
    """Move the leading RIS axis next to the element axis and merge them."""
    x = np.moveaxis(x, 0, -2)
    return x.reshape(x.shape[:-2] + (x.shape[-2] * x.shape[-1],))


def cascade_products(ch: ChannelSet) -> Cascades:
    sr_conj = ch.s_ris_dr.conj()
    d2d = _stack(sr_conj * ch.s_dt_ris)                                  # (J, NL)
    cu_dr = _stack(np.einsum("ljn,lkn->lkjn", sr_conj, ch.s_cu_ris))     # (K, J, NL)
    cu_bs = _stack(np.einsum("lmn,lkn->lkmn", ch.s_ris_bs, ch.s_cu_ris))  # (K, M, NL)
    dt_bs = _stack(np.einsum("lmn,ljn->ljmn", ch.s_ris_bs, ch.s_dt_ris))  # (J, M, NL)
    return Cascades(d2d, cu_dr, cu_bs, dt_bs)


@dataclass
class Pairing:
    """Binary reuse indicator rho (J x K).

    A row of zeros marks a D2D pair left silent because it has no feasible
    CU to pair with.
    """

    rho: np.ndarray

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=int)
        if self.rho.ndim != 2:
            raise ConfigurationError("rho must be J x K")
        if not np.isin(self.rho, (0, 1)).all():
            raise ConfigurationError("rho must be binary")
        if (self.rho.sum(axis=1) > 1).any() or (self.rho.sum(axis=0) > 1).any():
            raise ConfigurationError("each D2D pair and each CU can be matched at most once")

    @classmethod
    def from_assignment(cls, assignment: Sequence[Optional[int]], num_cu: int) -> "Pairing":
        rho = np.zeros((len(assignment), num_cu), dtype=int)
        for j, k in enumerate(assignment):
            if k is not None:
                rho[j, k] = 1
        return cls(rho)

    @property
    def assignment(self) -> list[Optional[int]]:
        return [int(np.argmax(row)) if row.any() else None for row in self.rho]

    @property
    def complete(self) -> bool:
        """True when every D2D pair is matched, i.e. (3f) holds."""
        return bool((self.rho.sum(axis=1) == 1).all())

    def partner_of_cu(self, k: int) -> Optional[int]:
        col = self.rho[:, k]
        return int(np.argmax(col)) if col.any() else None


@dataclass
class PowerAllocation:
    """Transmit powers in watts. Silent D2D pairs carry zero power."""

    p_cu: np.ndarray
    p_d2d: np.ndarray

    def __post_init__(self):
        self.p_cu = np.asarray(self.p_cu, dtype=float)
        self.p_d2d = np.asarray(self.p_d2d, dtype=float)

    def check(self, cfg: ScenarioConfig, pairing: Optional[Pairing] = None, tol: float = 0.0):
        if (self.p_cu <= 0).any() or (self.p_cu > cfg.p_max_cu * (1 + tol)).any():
            raise ConfigurationError("CU powers must lie in (0, p_max_cu]")
        if (self.p_d2d < 0).any() or (self.p_d2d > cfg.p_max_d2d * (1 + tol)).any():
            raise ConfigurationError("D2D powers must lie in [0, p_max_d2d]")
        if pairing is not None:
            active = pairing.rho.sum(axis=1) > 0
            if (self.p_d2d[active] <= 0).any():
                raise ConfigurationError("matched D2D pairs need positive power")


@dataclass
class BeamformerSet:
    """Unit-norm receive beamformers, one row per CU (K, M)."""

    w: np.ndarray

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=complex)
        norms = np.linalg.norm(self.w, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ConfigurationError("receive beamformers must have unit norm")


@dataclass
class EffectiveChannels:
    h_d2d: np.ndarray     # (J,)
    h_cu_dr: np.ndarray   # (K, J)
    h_cu_bs: np.ndarray   # (K, M)
    h_dt_bs: np.ndarray   # (J, M)


@dataclass
class SinrReport:
    gamma_d2d: np.ndarray
    gamma_cu: np.ndarray

    @property
    def rate_d2d(self) -> np.ndarray:
        return np.log1p(self.gamma_d2d)

    @property
    def rate_cu(self) -> np.ndarray:
        return np.log1p(self.gamma_cu)

    @property
    def sum_rate(self) -> float:
        return float(self.rate_d2d.sum() + self.rate_cu.sum())


def check_phase_vector(phi: np.ndarray, tol: float = UNIT_MODULUS_TOL) -> np.ndarray:
    phi = np.asarray(phi, dtype=complex)
    if phi.ndim != 1:
        raise ConfigurationError("phase vector must be one-dimensional")
    if phi.size and np.max(np.abs(np.abs(phi) - 1.0)) > tol:
        raise ConfigurationError("phase vector entries must have unit modulus")
    return phi


def compose_effective_channels(channels: ChannelSet, phi: np.ndarray) -> EffectiveChannels:
    """Direct channel plus the RIS-reflected contribution for every link."""
    phi = np.asarray(phi, dtype=complex)
    if phi.shape != (channels.num_elements,):
        raise ConfigurationError(
            f"phase vector has length {phi.shape}, expected {channels.num_elements}")
    c = channels.cascades()
    return EffectiveChannels(
        h_d2d=channels.g_d2d + c.d2d @ phi,
        h_cu_dr=channels.f_cu_dr + c.cu_dr @ phi,
        h_cu_bs=channels.g_cu_bs + c.cu_bs @ phi,
        h_dt_bs=channels.f_dt_bs + c.dt_bs @ phi,
    )


def sinr_from_effective(eff: EffectiveChannels, pairing: Pairing, powers: PowerAllocation,
                        beams: BeamformerSet, noise_d, noise_b) -> SinrReport:
    """SINRs of all links given effective channels.

    ``noise_d`` / ``noise_b`` may be scalars or per-link arrays (the robust
    variant adds the expected CSI-error power to the thermal noise).
    """
    rho = pairing.rho
    active = rho.sum(axis=1) > 0
    p_c, p_d = powers.p_cu, powers.p_d2d

    # interference at DR j from its partner CU
    interf_d = (rho * (p_c[None, :] * np.abs(eff.h_cu_dr.T) ** 2)).sum(axis=1)
    gamma_d = p_d * np.abs(eff.h_d2d) ** 2 / (interf_d + noise_d)
    gamma_d = np.where(active, gamma_d, 0.0)

    w = beams.w
    useful = p_c * np.abs(np.einsum("km,km->k", w.conj(), eff.h_cu_bs)) ** 2
    # |w_k^H h_j^D|^2 for all (k, j)
    cross = np.abs(w.conj() @ eff.h_dt_bs.T) ** 2
    interf_c = (rho.T * (p_d[None, :] * cross)).sum(axis=1)
    gamma_c = useful / (interf_c + noise_b)
    return SinrReport(gamma_d2d=gamma_d, gamma_cu=gamma_c)


def evaluate_sinr(channels: ChannelSet, phi: np.ndarray, pairing: Pairing,
                  powers: PowerAllocation, beams: BeamformerSet,
                  extra_noise_d=0.0, extra_noise_b=0.0) -> SinrReport:
    eff = compose_effective_channels(channels, phi)
    return sinr_from_effective(eff, pairing, powers, beams,
                               channels.noise_dr + extra_noise_d,
                               channels.noise_bs + extra_noise_b)


def qos_residuals(report: SinrReport, cfg: ScenarioConfig) -> np.ndarray:
    return report.gamma_cu - cfg.qos_threshold


def qos_feasible(report: SinrReport, cfg: ScenarioConfig, tol: float = QOS_TOL) -> bool:
    return bool(np.all(qos_residuals(report, cfg) >= -tol))


@dataclass
class SolutionState:
    """Complete decision of one solve plus the achieved SINRs."""

    pairing: Pairing
    powers: PowerAllocation
    beams: BeamformerSet
    phi: np.ndarray
    report: SinrReport
    flags: list[str] = field(default_factory=list)

    @property
    def sum_rate(self) -> float:
        return self.report.sum_rate


@dataclass
class AggregatedCascades:
    """Power- and beamformer-weighted channels used by the phase design.

    Vectors are stored so that the reflected term of a link is ``x^H phi``
    (``np.vdot(x, phi)``). The CU-side quantities of DT j depend on the
    beamformer of the CU it interferes with, so ``beta`` and ``f_tilde_d``
    are kept for every (k, j) and only the paired entries matter.

    a          (J, NL)     g_tilde_d  (J,)
    b          (K, J, NL)  f_tilde_c  (K, J)
    alpha      (K, NL)     g_tilde_c  (K,)
    beta       (K, J, NL)  f_tilde_d  (K, J)
    """

    a: np.ndarray
    g_tilde_d: np.ndarray
    b: np.ndarray
    f_tilde_c: np.ndarray
    alpha: np.ndarray
    g_tilde_c: np.ndarray
    beta: np.ndarray
    f_tilde_d: np.ndarray

    def numerators_and_interference(self, phi: np.ndarray, rho: np.ndarray):
        """Return (A_d, sum_k rho B_c, A_c, sum_j rho B_d) at ``phi``."""
        A_d = np.abs(self.g_tilde_d + self.a.conj() @ phi) ** 2
        B_c = np.abs(self.f_tilde_c + self.b.conj() @ phi) ** 2          # (K, J)
        A_c = np.abs(self.g_tilde_c + self.alpha.conj() @ phi) ** 2
        B_d = np.abs(self.f_tilde_d + self.beta.conj() @ phi) ** 2       # (K, J)
        return A_d, (rho * B_c.T).sum(axis=1), A_c, (rho.T * B_d).sum(axis=1)


def aggregate_cascades(channels: ChannelSet, pairing: Pairing, powers: PowerAllocation,
                       beams: BeamformerSet) -> AggregatedCascades:
    c = channels.cascades()
    sp_c = np.sqrt(powers.p_cu)
    sp_d = np.sqrt(powers.p_d2d)
    w_h = beams.w.conj()                                       # rows are w_k^H
    alpha_row = np.einsum("km,kmn->kn", w_h, c.cu_bs)          # w_k^H Q1_k
    beta_row = np.einsum("km,jmn->kjn", w_h, c.dt_bs)          # w_k^H Q2_j
    return AggregatedCascades(
        a=sp_d[:, None] * c.d2d.conj(),
        g_tilde_d=sp_d * channels.g_d2d,
        b=sp_c[:, None, None] * c.cu_dr.conj(),
        f_tilde_c=sp_c[:, None] * channels.f_cu_dr,
        alpha=sp_c[:, None] * alpha_row.conj(),
        g_tilde_c=sp_c * np.einsum("km,km->k", w_h, channels.g_cu_bs),
        beta=sp_d[None, :, None] * beta_row.conj(),
        f_tilde_d=sp_d[None, :] * (w_h @ channels.f_dt_bs.T),
    )


def sinr_from_cascades(agg: AggregatedCascades, phi: np.ndarray, pairing: Pairing,
                       noise_d, noise_b) -> SinrReport:
    """SINRs written through the aggregated cascades (ratio-of-quadratics form)."""
    A_d, I_d, A_c, I_c = agg.numerators_and_interference(phi, pairing.rho)
    active = pairing.rho.sum(axis=1) > 0
    gamma_d = np.where(active, A_d / (I_d + noise_d), 0.0)
    return SinrReport(gamma_d2d=gamma_d, gamma_cu=A_c / (I_c + noise_b))
