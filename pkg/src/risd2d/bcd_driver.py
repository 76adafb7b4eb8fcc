"""Block coordinate descent over {pairing, powers, beamformers} and the RIS phases.

Step 1 solves every (DT, CU) pair in closed form for the current phases
and pairs them with the Hungarian algorithm. Step 2 redesigns the phases by
fractional programming with RM-ADMM. The robust variant treats the
expected CSI-error power as additional noise and optimizes a lower bound
of the expected rate on the estimated channels.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channel_gen import CsiErrorModel
from .core_model import (
    BeamformerSet, ChannelSet, Pairing, PowerAllocation, ScenarioConfig, SolutionState,
    aggregate_cascades, compose_effective_channels, sinr_from_effective,
)
from .link_opt import cu_only_solution, solve_pair
from .pairing import build_weight_matrix, hungarian_match
from .passive_bf import FpConfig, fp_outer_loop

log = logging.getLogger(__name__)

QOS_REPORT_TOL = 1e-6
DECREASE_SLACK = 1e-6


@dataclass
class BcdConfig:
    max_outer_iter: int = 30
    rel_tol: float = 1e-4
    fp: FpConfig = field(default_factory=FpConfig)
    fixed_power: bool = False
    optimize_phases: bool = True
    robust: bool = False
    csi: Optional[CsiErrorModel] = None

    def __post_init__(self):
        if self.max_outer_iter < 1:
            raise ValueError("max_outer_iter must be >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")


@dataclass
class BcdTrace:
    sum_rate: list = field(default_factory=list)
    pairings: list = field(default_factory=list)
    qos_min: list = field(default_factory=list)
    step1_time: list = field(default_factory=list)
    step2_time: list = field(default_factory=list)
    fp: list = field(default_factory=list)
    decreases: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.sum_rate)

    def to_dict(self) -> dict:
        return {
            "sum_rate": [float(x) for x in self.sum_rate],
            "pairings": [[None if k is None else int(k) for k in p] for p in self.pairings],
            "qos_min": [float(x) for x in self.qos_min],
            "step1_time": [float(x) for x in self.step1_time],
            "step2_time": [float(x) for x in self.step2_time],
            "decreases": [float(x) for x in self.decreases],
            "converged": self.converged,
            "fp": [{"sum_rate": [float(x) for x in t.sum_rate], "flags": list(t.flags),
                    "admm_iterations": [d["iterations"] for d in t.admm]} for t in self.fp],
        }


@dataclass
class RobustEffectiveNoise:
    """Thermal plus expected CSI-error noise, per D2D pair and per CU."""

    e_d2d: np.ndarray
    e2k: np.ndarray
    sigma1_sq: np.ndarray
    sigma2_sq: np.ndarray


def csi_noise_powers(csi: CsiErrorModel, num_elements: int, p_c, p_d):
    """Expected error powers (at the DR, at the BS) of one pair at powers (p_c, p_d).

    The BS term assumes a unit-norm beamformer; NL = |phi|^2 on the manifold.
    """
    NL = num_elements
    e_d = p_d * (csi.g_d2d + csi.q1 * NL) + p_c * (csi.f_cu_dr + csi.q2 * NL)
    e_b = p_c * (csi.g_cu + csi.Q1 * NL) + p_d * (csi.f_dt_bs + csi.Q2 * NL)
    return e_d, e_b


def compute_robust_noise(estimates: ChannelSet, csi: CsiErrorModel, pairing: Pairing,
                         powers: PowerAllocation) -> RobustEffectiveNoise:
    NL = estimates.num_elements
    rho = pairing.rho
    p_c, p_d = powers.p_cu, powers.p_d2d
    active = rho.sum(axis=1) > 0
    e_d = np.where(active, p_d * (csi.g_d2d + csi.q1 * NL), 0.0) + rho @ (
        p_c * (csi.f_cu_dr + csi.q2 * NL))
    e_b = p_c * (csi.g_cu + csi.Q1 * NL) + rho.T @ (p_d * (csi.f_dt_bs + csi.Q2 * NL))
    return RobustEffectiveNoise(e_d2d=e_d, e2k=e_b, sigma1_sq=e_d + estimates.noise_dr,
                                sigma2_sq=e_b + estimates.noise_bs)


# ----------------------------------------------------------------------
# Step 1
# ----------------------------------------------------------------------

def link_step(channels: ChannelSet, phi: np.ndarray, cfg: ScenarioConfig,
              csi: Optional[CsiErrorModel] = None, fixed_power: bool = False):
    """Closed-form powers and beamformers for every pair, then matching.

    Returns (pairing, powers, beams, assignment).
    """
    eff = compose_effective_channels(channels, phi)
    K, J, NL = channels.num_cu, channels.num_d2d, channels.num_elements
    pc_max, pd_max = cfg.p_max_cu, cfg.p_max_d2d

    pair_noise = None if csi is None else (lambda p_c, p_d: csi_noise_powers(csi, NL, p_c, p_d))
    solo_noise = None if csi is None else (lambda p_c: csi_noise_powers(csi, NL, p_c, 0.0)[1])

    solos = [cu_only_solution(eff.h_cu_bs[k], pc_max, channels.noise_bs, solo_noise)
             for k in range(K)]
    sols = [[solve_pair(eff.h_d2d[j], eff.h_cu_dr[k, j], eff.h_cu_bs[k], eff.h_dt_bs[j],
                        cfg.qos_threshold, pd_max, pc_max, channels.noise_dr, channels.noise_bs,
                        csi_noise=pair_noise, fixed_power=fixed_power)
             for k in range(K)] for j in range(J)]
    wm = build_weight_matrix(sols, [s[1] for s in solos])
    assignment = hungarian_match(wm)

    pairing = Pairing.from_assignment(assignment, K)
    p_c = np.full(K, pc_max)
    p_d = np.zeros(J)
    w = np.array([s[0] for s in solos]).reshape(K, channels.bs_antennas)
    for j, k in enumerate(assignment):
        if k is None:
            continue
        s = sols[j][k]
        p_c[k], p_d[j], w[k] = s.p_c, s.p_d, s.w
    return pairing, PowerAllocation(p_cu=p_c, p_d2d=p_d), BeamformerSet(w=w), assignment


def _noise_arrays(channels, csi, pairing, powers):
    J, K = channels.num_d2d, channels.num_cu
    if csi is None:
        return np.full(J, channels.noise_dr), np.full(K, channels.noise_bs)
    rn = compute_robust_noise(channels, csi, pairing, powers)
    return rn.sigma1_sq, rn.sigma2_sq


def _report(channels, phi, pairing, powers, beams, csi):
    noise_d, noise_b = _noise_arrays(channels, csi, pairing, powers)
    eff = compose_effective_channels(channels, phi)
    return sinr_from_effective(eff, pairing, powers, beams, noise_d, noise_b)


def _flags(report, pairing, cfg) -> list:
    flags = []
    for k in range(pairing.rho.shape[1]):
        if report.gamma_cu[k] < cfg.qos_threshold - QOS_REPORT_TOL:
            tag = "matched" if pairing.partner_of_cu(k) is not None else "unmatched"
            flags.append(f"qos-infeasible:{tag}-cu-{k}")
    return flags


# ----------------------------------------------------------------------
# driver
# ----------------------------------------------------------------------

def _solve(channels: ChannelSet, cfg: ScenarioConfig, bcd: BcdConfig,
           csi: Optional[CsiErrorModel], phi0: Optional[np.ndarray] = None):
    NL = channels.num_elements
    phi = np.ones(NL, complex) if phi0 is None else np.asarray(phi0, dtype=complex).copy()
    trace = BcdTrace()
    state = None
    prev = None
    for it in range(bcd.max_outer_iter):
        t0 = time.perf_counter()
        pairing, powers, beams, assignment = link_step(channels, phi, cfg, csi, bcd.fixed_power)
        report = _report(channels, phi, pairing, powers, beams, csi)
        t1 = time.perf_counter()
        if state is not None and report.sum_rate < state.sum_rate:
            # keep the incumbent block when the re-pairing does not improve it
            pairing, powers, beams = state.pairing, state.powers, state.beams
            report = state.report
            assignment = pairing.assignment
        if bcd.optimize_phases and NL > 0:
            noise_d, noise_b = _noise_arrays(channels, csi, pairing, powers)
            agg = aggregate_cascades(channels, pairing, powers, beams)
            phi, fp_trace = fp_outer_loop(agg, pairing, phi, cfg.qos_threshold, noise_d, noise_b,
                                          bcd.fp)
            trace.fp.append(fp_trace)
            report = _report(channels, phi, pairing, powers, beams, csi)
        t2 = time.perf_counter()
        state = SolutionState(pairing=pairing, powers=powers, beams=beams, phi=phi.copy(),
                              report=report, flags=_flags(report, pairing, cfg))
        rate = report.sum_rate
        trace.sum_rate.append(rate)
        trace.pairings.append(list(assignment))
        trace.qos_min.append(float(np.min(report.gamma_cu - cfg.qos_threshold))
                             if report.gamma_cu.size else 0.0)
        trace.step1_time.append(t1 - t0)
        trace.step2_time.append(t2 - t1)
        if prev is not None:
            if rate < prev - DECREASE_SLACK:
                trace.decreases.append(prev - rate)
                log.warning("sum rate decreased by %.3e nats at outer iteration %d", prev - rate, it)
            if abs(rate - prev) <= bcd.rel_tol * max(abs(prev), 1e-12):
                trace.converged = True
                break
        if NL == 0 or not bcd.optimize_phases:
            trace.converged = True
            break
        prev = rate
    if not trace.converged:
        state.flags.append("not-converged")
    return state, trace


def bcd_solve(channels: ChannelSet, cfg: ScenarioConfig, bcd: BcdConfig | None = None,
              phi0: Optional[np.ndarray] = None):
    """Alternate Step 1 and Step 2 until the relative sum-rate change is below ``rel_tol``.

    Returns (SolutionState, BcdTrace). Perfect CSI is assumed unless
    ``bcd.robust`` is set, in which case the call is forwarded to
    :func:`robust_bcd_solve` with ``bcd.csi``.
    """
    bcd = bcd or BcdConfig()
    if bcd.robust:
        return robust_bcd_solve(channels, bcd.csi or CsiErrorModel(), cfg, bcd, phi0)
    return _solve(channels, cfg, bcd, None, phi0)


def robust_bcd_solve(estimates: ChannelSet, csi: CsiErrorModel, cfg: ScenarioConfig,
                     bcd: BcdConfig | None = None, phi0: Optional[np.ndarray] = None):
    """Robust pipeline on estimated channels; reported rates are the lower bounds."""
    bcd = bcd or BcdConfig()
    return _solve(estimates, cfg, bcd, csi, phi0)
