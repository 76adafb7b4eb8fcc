"""Per-pair link optimization: receive beamforming and closed-form powers.

For a candidate pair (DT j, CU k) with fixed RIS phases the CU SINR under
the MMSE-type receiver is

    gamma_C = nu1 * P_C * (lam2 + (1 - lam1) P_D) / (lam2 + P_D)

so the QoS constraint is a concave increasing curve in the (P_D, P_C)
plane. The optimum of the pair sum rate sits on one of three corner or
intersection points of the feasible region.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


class DegenerateChannelError(ValueError):
    """The CU effective channel vanishes, so no beamformer is defined."""


class InfeasiblePairError(ValueError):
    """The QoS threshold cannot be met on this subchannel even without D2D reuse."""


def receive_beamformer(h_cu_bs: np.ndarray, h_dt_bs: np.ndarray, p_d: float,
                       noise: float) -> np.ndarray:
    """Unit-norm maximizer of the CU SINR Rayleigh quotient.

    w = (p_d h_d h_d^H + noise I)^-1 h_c, normalized.
    """
    h_c = np.asarray(h_cu_bs, dtype=complex)
    h_d = np.asarray(h_dt_bs, dtype=complex)
    if not noise > 0:
        raise ValueError("noise must be positive")
    if np.linalg.norm(h_c) == 0:
        raise DegenerateChannelError("CU effective channel is zero")
    # Sherman-Morrison: (sI + p dd^H)^-1 c = (c - p d (d^H c)/(s + p d^H d)) / s
    w = h_c - p_d * h_d * (np.vdot(h_d, h_c) / (noise + p_d * np.vdot(h_d, h_d).real))
    return w / np.linalg.norm(w)


def robust_receive_beamformer(h_cu_bs_est: np.ndarray, h_dt_bs_est: np.ndarray, p_d: float,
                              noise: float, csi_noise: float) -> np.ndarray:
    """Beamformer for estimated channels; CSI-error power acts as extra white noise."""
    return receive_beamformer(h_cu_bs_est, h_dt_bs_est, p_d, csi_noise + noise)


def cu_sinr(w: np.ndarray, h_cu_bs: np.ndarray, h_dt_bs: np.ndarray, p_c: float, p_d: float,
            noise: float) -> float:
    num = p_c * abs(np.vdot(w, h_cu_bs)) ** 2
    return num / (p_d * abs(np.vdot(w, h_dt_bs)) ** 2 + noise * np.vdot(w, w).real)


@dataclass
class PowerRegion:
    """Geometry of the feasible (P_D, P_C) region of one pair.

    ``lambda2`` is None when the DT has no path to the BS; the constraint
    then reads P_C >= gamma_tilde_c regardless of P_D.
    """

    gamma_tilde_c: float
    lambda1: float
    lambda2: Optional[float]
    i_c: float
    p_max_d: float
    p_max_c: float
    feasible: bool

    def required_pc(self, p_d):
        """Minimum CU power meeting the QoS at DT power ``p_d``."""
        p_d = np.asarray(p_d, dtype=float)
        if self.lambda2 is None:
            return np.full_like(p_d, self.gamma_tilde_c)
        return self.gamma_tilde_c * (p_d + self.lambda2) / (
            (1.0 - self.lambda1) * p_d + self.lambda2)

    @property
    def o1(self) -> Optional[tuple[float, float]]:
        """Intersection of the QoS curve with P_C = P_C^max (case P_C^max < I_C)."""
        if self.lambda2 is None or not self.p_max_c < self.i_c:
            return None
        g, l1, l2, pc = self.gamma_tilde_c, self.lambda1, self.lambda2, self.p_max_c
        return (l2 * (g - pc) / ((1.0 - l1) * pc - g), pc)

    @property
    def o2(self) -> tuple[float, float]:
        return (self.p_max_d, self.i_c)

    @property
    def o3(self) -> tuple[float, float]:
        return (self.p_max_d, self.p_max_c)

    def contains(self, p_d: float, p_c: float, rtol: float = 1e-9) -> bool:
        return (0 < p_d <= self.p_max_d * (1 + rtol) and 0 < p_c <= self.p_max_c * (1 + rtol)
                and p_c >= self.required_pc(p_d) * (1 - rtol))


def power_region(h_cu_bs: np.ndarray, h_dt_bs: np.ndarray, noise_bs: float, qos: float,
                 p_max_d: float, p_max_c: float) -> PowerRegion:
    h_c = np.asarray(h_cu_bs, dtype=complex)
    h_d = np.asarray(h_dt_bs, dtype=complex)
    nc = np.vdot(h_c, h_c).real
    nd = np.vdot(h_d, h_d).real
    if nc == 0:
        raise DegenerateChannelError("CU effective channel is zero")
    g = noise_bs * qos / nc
    if nd == 0:
        lam1, lam2, i_c = 0.0, None, g
    else:
        lam1 = min(abs(np.vdot(h_c, h_d)) ** 2 / (nc * nd), 1.0)
        lam2 = noise_bs / nd
        i_c = g * (p_max_d + lam2) / ((1.0 - lam1) * p_max_d + lam2)
    return PowerRegion(gamma_tilde_c=g, lambda1=lam1, lambda2=lam2, i_c=i_c,
                       p_max_d=p_max_d, p_max_c=p_max_c, feasible=bool(g <= p_max_c))


@dataclass
class AppendixAParams:
    """Coefficients of the pair sum rate in the power plane.

    nu0 = |h_kj^C|^2 (CU -> DR), nu1 = ||h_k^C||^2 / noise_bs,
    nu2 = |h_j^D|^2 (DT -> DR).
    """

    nu0: float
    nu1: float
    nu2: float


def appendix_a_objective(p_c, p_d, params: AppendixAParams, region: PowerRegion, noise_d: float):
    """Pair sum rate (nats) with the optimal receive beamformer plugged in."""
    p_c = np.asarray(p_c, dtype=float)
    p_d = np.asarray(p_d, dtype=float)
    if region.lambda2 is None:
        cu_factor = 1.0 + params.nu1 * p_c
    else:
        l1, l2 = region.lambda1, region.lambda2
        cu_factor = 1.0 + params.nu1 * p_c * (l2 + (1.0 - l1) * p_d) / (l2 + p_d)
    d2d_factor = 1.0 + params.nu2 * p_d / (params.nu0 * p_c + noise_d)
    return np.log(cu_factor * d2d_factor)


def optimal_power_pair(region: PowerRegion, objective: Callable[[float, float], float]):
    """Pick the optimal (p_d, p_c) among the candidate points of the region.

    ``objective(p_c, p_d)`` scores a candidate; O3 wins exact ties with O2.
    Returns (p_d, p_c, label).
    """
    if not region.feasible:
        raise InfeasiblePairError("gamma_tilde_c exceeds the CU power limit")
    o1 = region.o1
    if o1 is not None:
        return o1[0], o1[1], "O1"
    p_d2, p_c2 = region.o2
    p_d3, p_c3 = region.o3
    r2 = float(objective(p_c2, p_d2))
    r3 = float(objective(p_c3, p_d3))
    if r2 > r3:
        return p_d2, p_c2, "O2"
    return p_d3, p_c3, "O3"


def border_segments(region: PowerRegion):
    """Feasible parts of the two lines P_D = P_D^max and P_C = P_C^max.

    Returns a list of (label, p_d(t), p_c(t)) pairs of arrays over a grid
    of t in [0, 1]; the maximum of the pair sum rate lies on one of them.
    """
    segs = []
    if region.i_c <= region.p_max_c:
        lo = max(float(region.i_c), 0.0)
        segs.append(("PDmax", lambda t: np.full_like(t, region.p_max_d),
                     lambda t: lo + t * (region.p_max_c - lo)))
    hi = region.o1[0] if region.o1 is not None else region.p_max_d
    # P_D stays strictly positive, as required of a matched DT
    floor = 1e-6 * hi
    segs.append(("PCmax", lambda t: floor + t * (hi - floor),
                 lambda t: np.full_like(t, region.p_max_c)))
    return segs


def border_search(region: PowerRegion, objective: Callable, scan: int = 257):
    """Maximize ``objective(p_c, p_d)`` (vectorized) over the region borders.

    A uniform scan of each border line is refined by a bounded scalar
    search around the best scan point. Returns (p_d, p_c, value).
    """
    from scipy.optimize import minimize_scalar

    best = (None, None, -np.inf)
    t = np.linspace(0.0, 1.0, scan)
    for _, fd, fc in border_segments(region):
        vals = np.asarray(objective(fc(t), fd(t)), dtype=float)
        vals = np.where(np.isfinite(vals), vals, -np.inf)
        i = int(np.argmax(vals))
        cand_t, cand_v = t[i], vals[i]
        lo, hi = t[max(i - 1, 0)], t[min(i + 1, scan - 1)]
        if hi > lo:
            res = minimize_scalar(
                lambda x: -float(objective(fc(np.array([x])), fd(np.array([x])))[0]),
                bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
            if res.success and -res.fun > cand_v:
                cand_t, cand_v = float(res.x), -float(res.fun)
        if cand_v > best[2]:
            x = np.array([cand_t])
            best = (float(fd(x)[0]), float(fc(x)[0]), float(cand_v))
    return best


@dataclass
class PairSolution:
    p_d: float
    p_c: float
    w: np.ndarray
    rate_d2d: float
    rate_cu: float
    feasible: bool
    candidate: str = ""

    @property
    def rate_sum(self) -> float:
        return self.rate_d2d + self.rate_cu


def solve_pair(h_d2d: complex, h_cu_dr: complex, h_cu_bs: np.ndarray, h_dt_bs: np.ndarray,
               qos: float, p_max_d: float, p_max_c: float, noise_d: float, noise_bs: float,
               csi_noise: Optional[Callable[[float, float], tuple[float, float]]] = None,
               fixed_power: bool = False, refine: bool = True) -> PairSolution:
    """Optimal powers and beamformer for one (DT, CU) pair.

    ``csi_noise(p_c, p_d)`` returns the expected CSI-error powers
    (at the DR, at the BS) for the robust variant. The power region is then
    built with the error power at full transmit powers, which can only
    overstate the interference and so keeps the lower-bound QoS satisfied.
    ``fixed_power`` pins both users at their limits (no power control).
    With ``refine`` the corner candidates are compared against a search
    along the two maximum-power border lines, which contain the optimum
    but not always at a corner.
    """
    def extra(p_c, p_d):
        return (0.0, 0.0) if csi_noise is None else csi_noise(p_c, p_d)

    nu0 = abs(h_cu_dr) ** 2
    nu2 = abs(h_d2d) ** 2

    def pair_rates(p_c, p_d):
        e_d, e_b = extra(p_c, p_d)
        w = receive_beamformer(h_cu_bs, h_dt_bs, p_d, noise_bs + e_b)
        g_c = cu_sinr(w, h_cu_bs, h_dt_bs, p_c, p_d, noise_bs + e_b)
        g_d = p_d * nu2 / (p_c * nu0 + noise_d + e_d)
        return w, g_c, g_d

    def objective(p_c, p_d):
        e_d, e_b = extra(p_c, p_d)
        reg = power_region(h_cu_bs, h_dt_bs, noise_bs + e_b, qos, p_max_d, p_max_c)
        params = AppendixAParams(nu0=nu0, nu1=np.vdot(h_cu_bs, h_cu_bs).real / (noise_bs + e_b),
                                 nu2=nu2)
        return appendix_a_objective(p_c, p_d, params, reg, noise_d + e_d)

    def objective_vec(p_c, p_d):
        return np.array([objective(a, b) for a, b in zip(p_c, p_d)]) if csi_noise else \
            objective(p_c, p_d)

    _, e_b_max = extra(p_max_c, p_max_d)
    region = power_region(h_cu_bs, h_dt_bs, noise_bs + e_b_max, qos, p_max_d, p_max_c)
    if fixed_power:
        p_d, p_c, label = p_max_d, p_max_c, "max"
        w, g_c, g_d = pair_rates(p_c, p_d)
        feasible = g_c >= qos * (1 - 1e-12)
    elif not region.feasible:
        p_d, p_c, label, feasible = 0.0, p_max_c, "", False
        w, g_c, g_d = pair_rates(p_c, p_d)
    else:
        p_d, p_c, label = optimal_power_pair(region, objective)
        if refine:
            bd, bc, bv = border_search(region, objective_vec)
            if bv > float(objective(p_c, p_d)) + 1e-12:
                p_d, p_c, label = bd, bc, "border"
        w, g_c, g_d = pair_rates(p_c, p_d)
        feasible = True
    return PairSolution(p_d=p_d, p_c=p_c, w=w, rate_d2d=math.log1p(g_d), rate_cu=math.log1p(g_c),
                        feasible=feasible, candidate=label)


def cu_only_solution(h_cu_bs: np.ndarray, p_max_c: float, noise_bs: float,
                     csi_noise: Optional[Callable[[float], float]] = None):
    """Rate of a CU without a D2D partner: full power, matched filter."""
    e_b = 0.0 if csi_noise is None else csi_noise(p_max_c)
    h = np.asarray(h_cu_bs, dtype=complex)
    w = h / np.linalg.norm(h)
    gamma = p_max_c * np.vdot(h, h).real / (noise_bs + e_b)
    return w, math.log1p(gamma), gamma
