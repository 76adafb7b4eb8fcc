"""RIS phase design: fractional-programming surrogate and the RM-ADMM solver.

Given pairing, powers and receive beamformers, the sum rate in the phase
vector is lifted with the Lagrangian dual transform (auxiliary ``zeta``)
and the quadratic transform (auxiliary ``xi``). For fixed auxiliaries the
phase subproblem is a unit-modulus QCQP

    max  -phi^H Ups phi + 2 Re(u^H phi)
    s.t. phi^H Ups_k phi - 2 Re(v_k^H phi) <= delta_k   (CU QoS rows)
         |phi_i| = 1

which is solved by consensus ADMM: a Riemannian gradient step for phi on
the product of circles, one projection per QoS row (a single-constraint
QCQP solved through its Lagrange multiplier) and a scaled dual update.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core_model import AggregatedCascades, Pairing, SinrReport, sinr_from_cascades

log = logging.getLogger(__name__)

FEAS_TOL = 1e-9


# ----------------------------------------------------------------------
# fractional programming auxiliaries
# ----------------------------------------------------------------------

def dual_transform_objective(zeta, gamma):
    """F(zeta, gamma) = log(1+zeta) - zeta + (1+zeta) gamma / (1+gamma)."""
    zeta = np.asarray(zeta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    return np.log1p(zeta) - zeta + (1.0 + zeta) * gamma / (1.0 + gamma)


@dataclass
class FpAuxiliaries:
    zeta_d: np.ndarray
    zeta_c: np.ndarray
    xi_d: Optional[np.ndarray] = None
    xi_c: Optional[np.ndarray] = None

    @property
    def zeta_tilde_d(self) -> np.ndarray:
        return 1.0 + self.zeta_d

    @property
    def zeta_tilde_c(self) -> np.ndarray:
        return 1.0 + self.zeta_c


def update_zeta(report: SinrReport) -> FpAuxiliaries:
    """The dual-transform optimum is zeta = gamma for every link."""
    return FpAuxiliaries(zeta_d=np.array(report.gamma_d2d, dtype=float),
                         zeta_c=np.array(report.gamma_cu, dtype=float))


def _denominators(agg: AggregatedCascades, phi, rho, noise_d, noise_b):
    A_d, I_d, A_c, I_c = agg.numerators_and_interference(phi, rho)
    return A_d + I_d + noise_d, A_c + I_c + noise_b


def update_xi(agg: AggregatedCascades, phi: np.ndarray, aux: FpAuxiliaries, pairing: Pairing,
              noise_d, noise_b) -> FpAuxiliaries:
    """Closed-form quadratic-transform auxiliaries at the current phases."""
    den_d, den_c = _denominators(agg, phi, pairing.rho, noise_d, noise_b)
    sig_d = agg.g_tilde_d + agg.a.conj() @ phi
    sig_c = agg.g_tilde_c + agg.alpha.conj() @ phi
    aux.xi_d = np.sqrt(aux.zeta_tilde_d) * sig_d / den_d
    aux.xi_c = np.sqrt(aux.zeta_tilde_c) * sig_c / den_c
    return aux


def fractional_surrogate(agg: AggregatedCascades, phi, aux: FpAuxiliaries, pairing: Pairing,
                         noise_d, noise_b) -> float:
    """sum zeta_tilde * A / (A + I + noise) over all links."""
    A_d, I_d, A_c, I_c = agg.numerators_and_interference(phi, pairing.rho)
    return float(np.sum(aux.zeta_tilde_d * A_d / (A_d + I_d + noise_d))
                 + np.sum(aux.zeta_tilde_c * A_c / (A_c + I_c + noise_b)))


def quadratic_surrogate(agg: AggregatedCascades, phi, aux: FpAuxiliaries, pairing: Pairing,
                        noise_d, noise_b) -> float:
    """Quadratic-transform objective evaluated term by term."""
    den_d, den_c = _denominators(agg, phi, pairing.rho, noise_d, noise_b)
    sig_d = agg.g_tilde_d + agg.a.conj() @ phi
    sig_c = agg.g_tilde_c + agg.alpha.conj() @ phi
    td = 2 * np.sqrt(aux.zeta_tilde_d) * np.real(aux.xi_d.conj() * sig_d) - np.abs(aux.xi_d) ** 2 * den_d
    tc = 2 * np.sqrt(aux.zeta_tilde_c) * np.real(aux.xi_c.conj() * sig_c) - np.abs(aux.xi_c) ** 2 * den_c
    return float(td.sum() + tc.sum())


# ----------------------------------------------------------------------
# QCQP assembly
# ----------------------------------------------------------------------

@dataclass
class QcqpProblem:
    """Data of the unit-modulus QCQP.

    The objective block (``upsilon``, ``u``, ``c_const``) reproduces the
    quadratic surrogate exactly: F_q = -phi^H Ups phi + 2 Re(u^H phi) + C.
    Constraint rows are divided by the noise power of their CU
    (``constraint_scale``) so that residuals are on the SINR scale;
    ``cu_index`` maps rows back to CUs.
    """

    upsilon: np.ndarray
    u: np.ndarray
    c_const: float
    upsilon_c: np.ndarray          # (R, NL, NL)
    v: np.ndarray                  # (R, NL)
    delta: np.ndarray              # (R,)
    constraint_scale: np.ndarray   # (R,)
    cu_index: np.ndarray           # (R,)

    @property
    def size(self) -> int:
        return self.u.shape[0]

    @property
    def num_constraints(self) -> int:
        return self.delta.shape[0]

    def objective(self, phi) -> float:
        """Maximization objective without the constant term."""
        return float(-np.real(np.vdot(phi, self.upsilon @ phi)) + 2 * np.real(np.vdot(self.u, phi)))

    def constraint_values(self, z) -> np.ndarray:
        """Left side minus right side of every QoS row at ``z`` (<= 0 is feasible)."""
        quad = np.real((self.upsilon_c @ z) @ z.conj())
        lin = 2 * np.real(self.v.conj() @ z)
        return quad - lin - self.delta

    def max_violation(self, z) -> float:
        if self.num_constraints == 0:
            return 0.0
        return float(max(self.constraint_values(z).max(), 0.0))

    def restricted(self, rows) -> "QcqpProblem":
        rows = np.asarray(rows, dtype=int)
        return QcqpProblem(self.upsilon, self.u, self.c_const, self.upsilon_c[rows], self.v[rows],
                           self.delta[rows], self.constraint_scale[rows], self.cu_index[rows])


def assemble_qcqp(agg: AggregatedCascades, aux: FpAuxiliaries, pairing: Pairing, qos: float,
                  noise_d, noise_b, constrained_cus=None) -> QcqpProblem:
    """Expand the quadratic surrogate and the QoS rows into QCQP data.

    ``constrained_cus`` selects which CUs get a QoS row (default: all).
    """
    rho = pairing.rho
    J, K = rho.shape
    NL = agg.a.shape[1]
    noise_d = np.broadcast_to(np.asarray(noise_d, dtype=float), (J,))
    noise_b = np.broadcast_to(np.asarray(noise_b, dtype=float), (K,))
    xd, xc = aux.xi_d, aux.xi_c
    sd, sc = np.sqrt(aux.zeta_tilde_d), np.sqrt(aux.zeta_tilde_c)
    wd, wc = np.abs(xd) ** 2, np.abs(xc) ** 2

    # D2D terms; b and f_tilde_c are indexed (k, j)
    rho_kj = rho.T.astype(float)
    ups = np.einsum("j,jn,jm->nm", wd, agg.a, agg.a.conj())
    ups += np.einsum("j,kj,kjn,kjm->nm", wd, rho_kj, agg.b, agg.b.conj())
    ups += np.einsum("k,kn,km->nm", wc, agg.alpha, agg.alpha.conj())
    ups += np.einsum("k,kj,kjn,kjm->nm", wc, rho_kj, agg.beta, agg.beta.conj())
    ups = 0.5 * (ups + ups.conj().T)

    u = ((sd * xd)[:, None] * agg.a).sum(axis=0)
    u -= ((wd * agg.g_tilde_d)[:, None] * agg.a).sum(axis=0)
    u -= np.einsum("j,kj,kj,kjn->n", wd, rho_kj, agg.f_tilde_c, agg.b)
    u += ((sc * xc)[:, None] * agg.alpha).sum(axis=0)
    u -= ((wc * agg.g_tilde_c)[:, None] * agg.alpha).sum(axis=0)
    u -= np.einsum("k,kj,kj,kjn->n", wc, rho_kj, agg.f_tilde_d, agg.beta)

    c_d = 2 * sd * np.real(xd.conj() * agg.g_tilde_d) - wd * (
        np.abs(agg.g_tilde_d) ** 2 + (rho_kj * np.abs(agg.f_tilde_c) ** 2).sum(axis=0) + noise_d)
    c_c = 2 * sc * np.real(xc.conj() * agg.g_tilde_c) - wc * (
        np.abs(agg.g_tilde_c) ** 2 + (rho_kj * np.abs(agg.f_tilde_d) ** 2).sum(axis=1) + noise_b)
    c_const = float(c_d.sum() + c_c.sum())

    cus = np.arange(K) if constrained_cus is None else np.asarray(constrained_cus, dtype=int)
    R = cus.size
    ups_c = np.zeros((R, NL, NL), complex)
    v = np.zeros((R, NL), complex)
    delta = np.zeros(R)
    scale = noise_b[cus].copy()
    for r, k in enumerate(cus):
        al = agg.alpha[k]
        q = -np.outer(al, al.conj())
        vk = agg.g_tilde_c[k] * al
        interf = 0.0
        for j in np.flatnonzero(rho[:, k]):
            be = agg.beta[k, j]
            q += qos * np.outer(be, be.conj())
            vk -= qos * agg.f_tilde_d[k, j] * be
            interf += abs(agg.f_tilde_d[k, j]) ** 2
        ups_c[r] = q / scale[r]
        v[r] = vk / scale[r]
        delta[r] = (abs(agg.g_tilde_c[k]) ** 2 - qos * (noise_b[k] + interf)) / scale[r]
    return QcqpProblem(upsilon=ups, u=u, c_const=c_const, upsilon_c=ups_c, v=v, delta=delta,
                       constraint_scale=scale, cu_index=cus)


# ----------------------------------------------------------------------
# Riemannian gradient descent on the unit-modulus manifold
# ----------------------------------------------------------------------

def retract(x: np.ndarray) -> np.ndarray:
    """Elementwise normalization back onto |x_i| = 1."""
    mag = np.abs(x)
    if mag.all():
        return x / mag
    out = np.ones_like(x)
    nz = mag > 0
    out[nz] = x[nz] / mag[nz]
    return out


def tangent_project(grad: np.ndarray, phi: np.ndarray) -> np.ndarray:
    return grad - np.real(grad * phi.conj()) * phi


@dataclass
class RgdConfig:
    max_iter: int = 30
    grad_tol: float = 1e-10
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 40
    rel_tol: float = 0.0        # stop when one step gains less than rel_tol * max(|f|, 1)


@dataclass
class _Quadratic:
    """phi^H A phi - 2 Re(b^H phi) + const on the manifold."""

    A: np.ndarray
    b: np.ndarray

    def value(self, phi) -> float:
        return float(np.real(np.vdot(phi, self.A @ phi)) - 2 * np.real(np.vdot(self.b, phi)))

    def egrad(self, phi) -> np.ndarray:
        return 2 * (self.A @ phi) - 2 * self.b


def penalized_objective(qcqp: QcqpProblem, z: np.ndarray, r: np.ndarray, penalty: float,
                        scale: float = 1.0):
    """Objective of the phi-update: f(phi)/scale + penalty * sum ||z_k - phi + r_k||^2.

    Returns (value function, Euclidean gradient function).
    """
    R = z.shape[0]
    A = qcqp.upsilon / scale + R * penalty * np.eye(qcqp.size)
    b = qcqp.u / scale + penalty * (z + r).sum(axis=0)
    const = penalty * float(np.sum(np.abs(z + r) ** 2))
    quad = _Quadratic(A, b)
    return (lambda phi: quad.value(phi) + const), quad.egrad


def riemannian_gradient(egrad_fn, phi):
    return tangent_project(egrad_fn(phi), phi)


def rgd_minimize(value_fn, egrad_fn, phi0: np.ndarray, cfg: RgdConfig | None = None,
                 step0: float = 1.0):
    """Riemannian gradient descent with Armijo backtracking.

    The first trial step of each iteration is a Barzilai-Borwein estimate
    (``step0`` on the first iteration). Returns (phi, last accepted step,
    iterations); the objective never increases.
    """
    cfg = cfg or RgdConfig()
    phi = np.array(phi0, dtype=complex)
    f = value_fn(phi)
    g = riemannian_gradient(egrad_fn, phi)
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite Riemannian gradient")
    step = step0
    it = 0
    for it in range(1, cfg.max_iter + 1):
        gn2 = float(np.real(np.vdot(g, g)))
        if gn2 <= cfg.grad_tol ** 2:
            break
        t = step
        for _ in range(cfg.max_backtracks):
            cand = retract(phi - t * g)
            fc = value_fn(cand)
            if fc <= f - cfg.armijo_c * t * gn2:
                break
            t *= cfg.backtrack
        else:
            break
        g_new = riemannian_gradient(egrad_fn, cand)
        if not np.all(np.isfinite(g_new)):
            raise FloatingPointError("non-finite Riemannian gradient")
        s = cand - phi
        y = g_new - tangent_project(g, cand)
        sy = float(np.real(np.vdot(s, y)))
        step = float(np.real(np.vdot(s, s))) / sy if sy > 0 else 2 * t
        step = min(max(step, 1e-12), 1e12)
        gain = f - fc
        phi, f, g = cand, fc, g_new
        if gain <= cfg.rel_tol * max(abs(f), 1.0):
            break
    return phi, step, it


# ----------------------------------------------------------------------
# single-constraint projection (z-update)
# ----------------------------------------------------------------------

class BracketError(RuntimeError):
    """No sign change of the multiplier equation was found."""


@dataclass
class BisectionProblem:
    """Multiplier equation of one projection, in the eigenbasis of Ups_k.

    g(mu) = sum_i eps_i |(r_i + mu v_i)/(1 + mu eps_i)|^2
            - 2 Re sum_i conj(v_i) (r_i + mu v_i)/(1 + mu eps_i) - delta
    """

    eigvals: np.ndarray
    r_rot: np.ndarray
    v_rot: np.ndarray
    delta: float
    basis: Optional[np.ndarray] = None
    bracket: tuple[float, float] = (0.0, math.inf)

    @classmethod
    def build(cls, upsilon_k, v_k, delta_k, r_tilde, eig=None) -> "BisectionProblem":
        eps, U = eig if eig is not None else np.linalg.eigh(upsilon_k)
        return cls(eigvals=eps, r_rot=U.conj().T @ r_tilde, v_rot=U.conj().T @ v_k,
                   delta=float(delta_k), basis=U)

    def g(self, mu) -> np.ndarray:
        mu = np.asarray(mu, dtype=float)[..., None]
        y = (self.r_rot + mu * self.v_rot) / (1.0 + mu * self.eigvals)
        val = (self.eigvals * np.abs(y) ** 2).sum(-1) - 2 * np.real(self.v_rot.conj() * y).sum(-1)
        return val - self.delta

    def z(self, mu: float) -> np.ndarray:
        y = (self.r_rot + mu * self.v_rot) / (1.0 + mu * self.eigvals)
        return self.basis @ y

    def refine_bracket(self, max_expand: int = 200) -> tuple[float, float]:
        """Find [0, mu_hi] with g(0) > 0 >= g(mu_hi) and I + mu Ups positive definite."""
        if not self.g(0.0) > 0:
            self.bracket = (0.0, 0.0)
            return self.bracket
        eps_min = float(self.eigvals.min())
        if eps_min < 0:
            pole = -1.0 / eps_min
            for t in range(1, max_expand):
                mu = pole * (1.0 - 2.0 ** (-t))
                if mu >= pole:
                    break
                if self.g(mu) <= 0:
                    self.bracket = (0.0, mu)
                    return self.bracket
        else:
            mu = 1.0 / max(float(np.abs(self.eigvals).max()), 1e-300)
            for _ in range(max_expand):
                if self.g(mu) <= 0:
                    self.bracket = (0.0, mu)
                    return self.bracket
                mu *= 2.0
        raise BracketError("multiplier equation has no sign change on the positive-definite range")


def bisection_solve(problem: BisectionProblem, tol: float = 1e-9, max_iter: int = 200) -> float:
    """Root of the decreasing multiplier equation; returns the feasible-side end.

    The returned mu satisfies -tol <= g(mu) <= 0 unless the bracket shrank
    to machine precision first, in which case g(mu) <= 0 still holds.
    """
    lo, hi = problem.refine_bracket()
    if hi == 0.0:
        return 0.0
    g_hi = float(problem.g(hi))
    for _ in range(max_iter):
        if -tol <= g_hi <= 0:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        gm = float(problem.g(mid))
        if gm > 0:
            lo = mid
        else:
            hi, g_hi = mid, gm
    return hi


def constraint_value(upsilon_k, v_k, delta_k, z) -> float:
    return float(np.real(np.vdot(z, upsilon_k @ z)) - 2 * np.real(np.vdot(v_k, z)) - delta_k)


def z_update(upsilon_k, v_k, delta_k, phi, r_k, eig=None, tol: float = 1e-9):
    """Project phi - r_k onto one QoS row. Returns (z_k, mu, status)."""
    r_tilde = phi - r_k
    if constraint_value(upsilon_k, v_k, delta_k, r_tilde) <= 0:
        return r_tilde, 0.0, "inactive"
    prob = BisectionProblem.build(upsilon_k, v_k, delta_k, r_tilde, eig)
    try:
        mu = bisection_solve(prob, tol)
        return prob.z(mu), mu, "active"
    except BracketError:
        # damped move toward feasibility along the positive-definite range
        eps_min = float(prob.eigvals.min())
        mu = 0.5 / -eps_min if eps_min < 0 else 1.0
        return prob.z(mu), mu, "fallback"


# ----------------------------------------------------------------------
# consensus ADMM
# ----------------------------------------------------------------------

@dataclass
class AdmmConfig:
    penalty: float = 1.0
    max_iter: int = 200
    tol: float = 1e-4
    adaptive_penalty: bool = True
    restarts: int = 0
    seed: int = 0
    rgd: RgdConfig = field(default_factory=RgdConfig)
    unconstrained_rgd_iter: int = 2000
    polish_iter: int = 500
    polish_rel_tol: float = 1e-8


@dataclass
class AdmmDiagnostics:
    iterations: int = 0
    converged: bool = False
    objective: list = field(default_factory=list)
    primal_residual: list = field(default_factory=list)
    dual_residual: list = field(default_factory=list)
    max_violation: list = field(default_factory=list)
    fallbacks: int = 0
    feasible: bool = True
    penalty: float = 0.0
    polish_gain: float = 0.0

    def to_dict(self) -> dict:
        return {"iterations": self.iterations, "converged": self.converged,
                "objective": list(map(float, self.objective)),
                "primal_residual": list(map(float, self.primal_residual)),
                "dual_residual": list(map(float, self.dual_residual)),
                "max_violation": list(map(float, self.max_violation)),
                "fallbacks": self.fallbacks, "feasible": self.feasible,
                "penalty": float(self.penalty), "polish_gain": float(self.polish_gain)}


@dataclass
class AdmmState:
    phi: np.ndarray
    z: np.ndarray
    r: np.ndarray
    penalty: float
    iteration: int = 0


def _objective_scale(qcqp: QcqpProblem) -> float:
    s = max(float(np.linalg.norm(qcqp.upsilon, 2)) if qcqp.size else 0.0,
            float(np.abs(qcqp.u).max()) if qcqp.size else 0.0)
    return s if s > 0 else 1.0


def _admm_run(qcqp: QcqpProblem, init: np.ndarray, cfg: AdmmConfig, eigs):
    NL, R = qcqp.size, qcqp.num_constraints
    scale = _objective_scale(qcqp)
    diag = AdmmDiagnostics()
    state = AdmmState(phi=init.copy(), z=np.tile(init, (R, 1)), r=np.zeros((R, NL), complex),
                      penalty=cfg.penalty)
    best_feas, best_feas_obj = None, -math.inf
    best_viol_phi, best_viol = None, math.inf

    def consider(phi):
        nonlocal best_feas, best_feas_obj, best_viol_phi, best_viol
        viol = qcqp.max_violation(phi)
        obj = qcqp.objective(phi)
        if viol <= FEAS_TOL and obj > best_feas_obj:
            best_feas, best_feas_obj = phi.copy(), obj
        if viol < best_viol:
            best_viol_phi, best_viol = phi.copy(), viol
        return obj, viol

    consider(state.phi)
    step = 1.0
    for it in range(1, cfg.max_iter + 1):
        value_fn, egrad_fn = penalized_objective(qcqp, state.z, state.r, state.penalty, scale)
        state.phi, step, _ = rgd_minimize(value_fn, egrad_fn, state.phi, cfg.rgd, step)
        z_old = state.z.copy()
        for k in range(R):
            state.z[k], _, status = z_update(qcqp.upsilon_c[k], qcqp.v[k], qcqp.delta[k],
                                             state.phi, state.r[k], eigs[k])
            if status == "fallback":
                diag.fallbacks += 1
        state.r += state.z - state.phi
        primal = float(np.max(np.linalg.norm(state.z - state.phi, axis=1)))
        dual = state.penalty * float(np.max(np.linalg.norm(state.z - z_old, axis=1)))
        obj, viol = consider(state.phi)
        diag.objective.append(obj)
        diag.primal_residual.append(primal)
        diag.dual_residual.append(dual)
        diag.max_violation.append(viol)
        diag.iterations = it
        state.iteration = it
        if primal < cfg.tol and dual < cfg.tol:
            diag.converged = True
            break
        if cfg.adaptive_penalty:
            if primal > 10 * dual:
                state.penalty *= 2.0
                state.r /= 2.0
            elif dual > 10 * primal:
                state.penalty /= 2.0
                state.r *= 2.0
    diag.penalty = state.penalty
    if best_feas is not None:
        return best_feas, best_feas_obj, diag
    diag.feasible = False
    return best_viol_phi, qcqp.objective(best_viol_phi), diag


def admm_solve(qcqp: QcqpProblem, init: np.ndarray, cfg: AdmmConfig | None = None):
    """RM-ADMM for the unit-modulus QCQP.

    Returns (phi, diagnostics). phi is the best feasible iterate seen
    (the initial point included); if no iterate is feasible the least
    violating one is returned and ``diagnostics.feasible`` is False.
    """
    cfg = cfg or AdmmConfig()
    init = np.asarray(init, dtype=complex)
    if qcqp.size == 0:
        return init.copy(), AdmmDiagnostics(converged=True)
    if qcqp.num_constraints == 0:
        scale = _objective_scale(qcqp)
        value_fn, egrad_fn = penalized_objective(
            qcqp, np.zeros((0, qcqp.size), complex), np.zeros((0, qcqp.size), complex), 0.0, scale)
        rcfg = RgdConfig(**{**cfg.rgd.__dict__, "max_iter": cfg.unconstrained_rgd_iter})
        starts = [init] + _random_starts(qcqp.size, cfg)
        best, best_obj, its = None, -math.inf, 0
        for s in starts:
            phi, _, it = rgd_minimize(value_fn, egrad_fn, s, rcfg)
            its += it
            if qcqp.objective(phi) > best_obj:
                best, best_obj = phi, qcqp.objective(phi)
        diag = AdmmDiagnostics(iterations=1, converged=True, objective=[best_obj],
                               primal_residual=[0.0], dual_residual=[0.0], max_violation=[0.0])
        return best, diag

    eigs = [np.linalg.eigh(qcqp.upsilon_c[k]) for k in range(qcqp.num_constraints)]
    best, best_obj, best_diag = None, -math.inf, None
    for s in [init] + _random_starts(qcqp.size, cfg):
        phi, obj, diag = _admm_run(qcqp, s, cfg, eigs)
        better = best is None or (diag.feasible and not best_diag.feasible) or (
            diag.feasible == best_diag.feasible and (
                obj > best_obj if diag.feasible else
                qcqp.max_violation(phi) < qcqp.max_violation(best)))
        if better:
            best, best_obj, best_diag = phi, obj, diag
    if best_diag.feasible and cfg.polish_iter > 0:
        best = feasible_polish(qcqp, best, cfg)
        best_diag.polish_gain = qcqp.objective(best) - best_obj
    return best, best_diag


def feasible_polish(qcqp: QcqpProblem, phi: np.ndarray, cfg: AdmmConfig) -> np.ndarray:
    """Manifold ascent on the QCQP objective that never leaves the feasible set.

    ADMM stops on small residuals, which can happen while phi still drifts
    along weak directions of an ill-conditioned Ups. Trial points that
    violate a row are rejected by the backtracking, so the result is
    feasible and never worse than ``phi``.
    """
    scale = _objective_scale(qcqp)

    def value_fn(p):
        if qcqp.max_violation(p) > FEAS_TOL:
            return math.inf
        return -qcqp.objective(p) / scale

    def egrad_fn(p):
        return (2 * (qcqp.upsilon @ p) - 2 * qcqp.u) / scale

    rcfg = RgdConfig(**{**cfg.rgd.__dict__, "max_iter": cfg.polish_iter,
                        "rel_tol": cfg.polish_rel_tol})
    out, _, _ = rgd_minimize(value_fn, egrad_fn, phi, rcfg)
    return out if qcqp.objective(out) >= qcqp.objective(phi) else phi


def _random_starts(size: int, cfg: AdmmConfig) -> list:
    rng = np.random.default_rng([cfg.seed, 7919])
    return [np.exp(1j * rng.uniform(0, 2 * np.pi, size)) for _ in range(cfg.restarts)]


# ----------------------------------------------------------------------
# fractional-programming outer loop
# ----------------------------------------------------------------------

@dataclass
class FpConfig:
    max_iter: int = 50
    tol: float = 1e-5
    admm: AdmmConfig = field(default_factory=AdmmConfig)
    extrapolate: bool = True
    max_momentum: float = 8.0


@dataclass
class FpTrace:
    sum_rate: list = field(default_factory=list)
    surrogate_before: list = field(default_factory=list)
    surrogate_after: list = field(default_factory=list)
    admm: list = field(default_factory=list)
    flags: list = field(default_factory=list)


def _extrapolate(agg, pairing, phi_old, phi_new, report, constrained, qos, noise_d, noise_b,
                 beta, max_beta):
    """Safeguarded momentum along the last phase step.

    The trial point is accepted only if the sum rate rises and no QoS row
    gets worse than at ``phi_new``. Returns (phi, report, next beta).
    """
    slack = np.min(report.gamma_cu[constrained] - qos, initial=np.inf)
    trial = retract(phi_new + beta * (phi_new - phi_old))
    rep = sinr_from_cascades(agg, trial, pairing, noise_d, noise_b)
    ok = rep.sum_rate > report.sum_rate and \
        np.min(rep.gamma_cu[constrained] - qos, initial=np.inf) >= min(slack, 0.0)
    if ok:
        return trial, rep, min(2.0 * beta, max_beta)
    return phi_new, report, max(beta / 2.0, 0.25)


def fp_outer_loop(agg: AggregatedCascades, pairing: Pairing, phi_init: np.ndarray, qos: float,
                  noise_d, noise_b, cfg: FpConfig | None = None):
    """Alternate (zeta, xi) updates with RM-ADMM phase updates.

    QoS rows are imposed for every matched CU and for every unmatched CU
    that already meets the threshold at ``phi_init``. Returns (phi, trace).
    """
    cfg = cfg or FpConfig()
    phi = np.asarray(phi_init, dtype=complex).copy()
    trace = FpTrace()
    if phi.size == 0:
        return phi, trace
    report = sinr_from_cascades(agg, phi, pairing, noise_d, noise_b)
    matched = pairing.rho.sum(axis=0) > 0
    keep = matched | (report.gamma_cu >= qos)
    constrained = np.flatnonzero(keep)
    rate = report.sum_rate
    trace.sum_rate.append(rate)
    beta = 1.0
    for it in range(cfg.max_iter):
        aux = update_xi(agg, phi, update_zeta(report), pairing, noise_d, noise_b)
        trace.surrogate_before.append(fractional_surrogate(agg, phi, aux, pairing, noise_d, noise_b))
        qcqp = assemble_qcqp(agg, aux, pairing, qos, noise_d, noise_b, constrained)
        acfg = cfg.admm
        if acfg.restarts:
            acfg = AdmmConfig(**{**acfg.__dict__, "seed": acfg.seed + it})
        phi_new, diag = admm_solve(qcqp, phi, acfg)
        trace.admm.append(diag.to_dict())
        if not diag.feasible:
            trace.flags.append("admm-infeasible")
            break
        trace.surrogate_after.append(
            fractional_surrogate(agg, phi_new, aux, pairing, noise_d, noise_b))
        new_report = sinr_from_cascades(agg, phi_new, pairing, noise_d, noise_b)
        new_rate = new_report.sum_rate
        if new_rate < rate:
            # rounding-level regressions only; keep the better point
            trace.sum_rate.append(rate)
            break
        if cfg.extrapolate:
            phi_new, new_report, beta = _extrapolate(agg, pairing, phi, phi_new, new_report,
                                                     constrained, qos, noise_d, noise_b, beta,
                                                     cfg.max_momentum)
            new_rate = new_report.sum_rate
        phi, report = phi_new, new_report
        trace.sum_rate.append(new_rate)
        converged = abs(new_rate - rate) <= cfg.tol * max(abs(rate), 1e-12)
        rate = new_rate
        if converged:
            break
    return phi, trace
