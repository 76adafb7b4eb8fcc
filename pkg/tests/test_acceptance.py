"""Acceptance criteria, one test each.

Every test records a ``criterion N: PASS|FAIL ...`` line; the lines are
printed in the terminal summary (see conftest.py) and also when this file
is run as a script.
"""
import dataclasses
import functools
import math
import time

import numpy as np
from numpy.testing import assert_allclose

from conftest import ACCEPTANCE_LINES, random_channels, random_cn, random_phases
from oracles import brute_force_matching, qcqp_exhaustive
from risd2d.bcd_driver import (
    BcdConfig, bcd_solve, csi_noise_powers, link_step, robust_bcd_solve,
)
from risd2d.channel_gen import CsiErrorModel, FadingConfig, apply_csi_error, generate_channels
from risd2d.core_model import (
    BeamformerSet, Pairing, PowerAllocation, ScenarioConfig, aggregate_cascades,
    compose_effective_channels, sinr_from_cascades,
)
from risd2d.experiments import SolverSettings, solve_scheme
from risd2d.link_opt import cu_sinr, receive_beamformer, solve_pair
from risd2d.pairing import WeightMatrix, hungarian_match
from risd2d.passive_bf import (
    AdmmConfig, BisectionProblem, FpAuxiliaries, assemble_qcqp, admm_solve, constraint_value,
    dual_transform_objective, penalized_objective, quadratic_surrogate, riemannian_gradient,
    rgd_minimize, update_xi, update_zeta, z_update,
)

SEEDS = 20
FADING = FadingConfig()
SOLVER = SolverSettings()
QOS_TOL = 1e-6


def record(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# ----------------------------------------------------------------------
# shared Monte Carlo runs
# ----------------------------------------------------------------------

_RUNS = {}


def run(cfg, scheme, seed):
    """Solve one (scenario, scheme, seed) once per session."""
    key = (repr(cfg), scheme, seed)
    if key not in _RUNS:
        t0 = time.perf_counter()
        used, _, sol, trace = solve_scheme(cfg, scheme, seed, FADING, SOLVER)
        _RUNS[key] = (used, sol, trace, time.perf_counter() - t0)
    return _RUNS[key]


def mean_rate(cfg, scheme, seeds=SEEDS):
    return float(np.mean([run(cfg, scheme, s)[1].sum_rate for s in range(seeds)]))


BASE = ScenarioConfig()                                  # K=3, J=2, L=4, N=10, P=20 mW
SINGLE = dataclasses.replace(BASE, num_cu=1, num_d2d=1)
TWO = dataclasses.replace(BASE, num_cu=2, num_d2d=2)

SWEEPS = {
    "N": (BASE, "elements_per_ris", [5, 10, 20], +1),
    "M": (SINGLE, "bs_antennas", [2, 4, 8], +1),
    "P": (BASE, ("p_max_cu", "p_max_d2d"), [0.005, 0.01, 0.02, 0.04], +1),
    "qos": (dataclasses.replace(SINGLE, elements_per_ris=5), "qos_threshold",
            [0.5, 2.0, 8.0, 32.0, 128.0], -1),
}


def sweep_point(base, field, value):
    fields = field if isinstance(field, tuple) else (field,)
    return dataclasses.replace(base, **{f: value for f in fields})


@functools.lru_cache(maxsize=None)
def sweep_results(name):
    base, field, values, _ = SWEEPS[name]
    t0 = time.perf_counter()
    out = [(v, mean_rate(sweep_point(base, field, v), "proposed"),
            mean_rate(sweep_point(base, field, v), "no-ris")) for v in values]
    return out, time.perf_counter() - t0


@functools.lru_cache(maxsize=None)
def deployment_results():
    t0 = time.perf_counter()
    return (mean_rate(TWO, "distributed-ris"), mean_rate(TWO, "centralized-ris"),
            time.perf_counter() - t0)


# ----------------------------------------------------------------------
# criteria
# ----------------------------------------------------------------------

def test_criterion_01_power_pair_grid_oracle():
    cfg = SINGLE
    rng = np.random.default_rng(1)
    n, count, worst, seed = 500, 0, 0.0, 0
    t0 = time.perf_counter()
    pd = np.linspace(cfg.p_max_d2d / n, cfg.p_max_d2d, n)
    pc = np.linspace(cfg.p_max_cu / n, cfg.p_max_cu, n)
    PD, PC = np.meshgrid(pd, pc, indexing="ij")
    while count < 500:
        ch = generate_channels(cfg, seed=seed)
        seed += 1
        e = compose_effective_channels(ch, random_phases(rng, ch.num_elements))
        qos = float(np.exp(rng.uniform(np.log(0.1), np.log(50.0))))
        sol = solve_pair(e.h_d2d[0], e.h_cu_dr[0, 0], e.h_cu_bs[0], e.h_dt_bs[0], qos,
                         cfg.p_max_d2d, cfg.p_max_cu, ch.noise_dr, ch.noise_bs)
        if not sol.feasible:
            continue
        count += 1
        c, d, s2 = e.h_cu_bs[0], e.h_dt_bs[0], ch.noise_bs
        g_c = PC * (np.vdot(c, c).real - PD * abs(np.vdot(d, c)) ** 2
                    / (s2 + PD * np.vdot(d, d).real)) / s2
        g_d = PD * abs(e.h_d2d[0]) ** 2 / (PC * abs(e.h_cu_dr[0, 0]) ** 2 + ch.noise_dr)
        grid = np.where(g_c >= qos, np.log1p(g_c) + np.log1p(g_d), -np.inf).max()
        worst = max(worst, grid - sol.rate_sum)
    elapsed = time.perf_counter() - t0
    record(1, worst <= 1e-4 and elapsed < 60,
           f"500 feasible pairs, worst grid excess {worst:.2e} nats (tol 1e-4), {elapsed:.1f} s")


def test_criterion_02_receive_beamformer_maximality():
    rng = np.random.default_rng(2)
    worst = -math.inf
    for _ in range(200):
        h_c, h_d = random_cn(rng, 4), random_cn(rng, 4)
        p_d, noise = rng.uniform(0.1, 2.0), rng.uniform(0.05, 1.0)
        w = receive_beamformer(h_c, h_d, p_d, noise)
        best = cu_sinr(w, h_c, h_d, 1.0, p_d, noise)
        V = random_cn(rng, (100_000, 4))
        V /= np.linalg.norm(V, axis=1, keepdims=True)
        sampled = np.abs(V.conj() @ h_c) ** 2 / (p_d * np.abs(V.conj() @ h_d) ** 2 + noise)
        worst = max(worst, float(sampled.max() - best))
    record(2, -worst >= -1e-9,
           f"200 instances x 1e5 unit vectors, min margin {-worst:.2e} (need >= -1e-9)")


def test_criterion_03_hungarian_exactness():
    rng = np.random.default_rng(3)
    mismatches = 0
    for _ in range(1000):
        J = int(rng.integers(1, 7))
        K = int(rng.integers(J, 9))
        w = rng.normal(size=(J, K))
        w[rng.random((J, K)) < 0.25] = np.nan
        a = hungarian_match(WeightMatrix(w, 0.0))
        got = (sum(k is not None for k in a),
               math.fsum(w[j, k] for j, k in enumerate(a) if k is not None))
        mismatches += got != brute_force_matching(w)
    record(3, mismatches == 0, f"1000 instances J<=6, K<=8, {mismatches} mismatches vs enumeration")


def _random_agg(rng):
    ch = random_channels(rng, 2, 2, 3, 2, 2)
    pairing = Pairing.from_assignment(list(rng.permutation(2)), 2)
    powers = PowerAllocation(rng.uniform(0.2, 1, 2), rng.uniform(0.2, 1, 2))
    w = random_cn(rng, (2, 3))
    beams = BeamformerSet(w / np.linalg.norm(w, axis=1, keepdims=True))
    return aggregate_cascades(ch, pairing, powers, beams), pairing


def test_criterion_04_fp_identities():
    rng = np.random.default_rng(4)
    g = rng.uniform(0, 100, 100)
    err_f = float(np.max(np.abs(dual_transform_objective(g, g) - np.log1p(g))))
    err_q = err_c = 0.0
    for _ in range(100):
        agg, pairing = _random_agg(rng)
        phi = random_phases(rng, 4)
        aux = FpAuxiliaries(rng.uniform(0, 3, 2), rng.uniform(0, 3, 2),
                            random_cn(rng, 2), random_cn(rng, 2))
        nb = rng.uniform(0.05, 0.2, 2)
        qos = rng.uniform(0, 3)
        q = assemble_qcqp(agg, aux, pairing, qos, 0.1, nb)
        direct = quadratic_surrogate(agg, phi, aux, pairing, 0.1, nb)
        err_q = max(err_q, abs(q.objective(phi) + q.c_const - direct) / abs(direct))
        _, _, A_c, I_c = agg.numerators_and_interference(phi, pairing.rho)
        ref = (qos * (I_c + nb) - A_c) / nb
        err_c = max(err_c, float(np.max(np.abs(q.constraint_values(phi) - ref) / np.abs(ref))))
    record(4, err_f <= 1e-12 and err_q <= 1e-9 and err_c <= 1e-9,
           f"F(g,g) err {err_f:.1e}, quadratic form rel err {err_q:.1e}, "
           f"constraint rel err {err_c:.1e}")


def test_criterion_05_rgd_gradient():
    rng = np.random.default_rng(5)
    worst_fd = worst_mod = 0.0
    for _ in range(50):
        agg, pairing = _random_agg(rng)
        phi = random_phases(rng, 4)
        rep = sinr_from_cascades(agg, phi, pairing, 0.1, 0.1)
        aux = update_xi(agg, phi, update_zeta(rep), pairing, 0.1, 0.1)
        q = assemble_qcqp(agg, aux, pairing, 0.5, 0.1, 0.1)
        value_fn, egrad_fn = penalized_objective(q, random_cn(rng, (2, 4)),
                                                 0.1 * random_cn(rng, (2, 4)), 1.0, 2.0)
        t = rng.normal(size=4)
        analytic = np.real(np.vdot(riemannian_gradient(egrad_fn, phi), 1j * t * phi))
        h = 1e-5
        fd = (value_fn(phi * np.exp(1j * h * t)) - value_fn(phi * np.exp(-1j * h * t))) / (2 * h)
        worst_fd = max(worst_fd, abs(fd - analytic) / abs(analytic))
        out, _, _ = rgd_minimize(value_fn, egrad_fn, phi)
        worst_mod = max(worst_mod, float(np.max(np.abs(np.abs(out) - 1.0))))
    record(5, worst_fd <= 1e-5 and worst_mod <= 1e-12,
           f"50 instances, finite-difference rel err {worst_fd:.1e}, "
           f"unit-modulus err {worst_mod:.1e}")


def test_criterion_06_bisection():
    rng = np.random.default_rng(6)
    nonmono = active = 0
    worst = 0.0
    for _ in range(200):
        X = random_cn(rng, (4, 4))
        ups, v = 0.5 * (X + X.conj().T), random_cn(rng, 4)
        phi, r = random_phases(rng, 4), 0.3 * random_cn(rng, 4)
        delta = constraint_value(ups, v, 0.0, phi - r) - abs(rng.normal())
        prob = BisectionProblem.build(ups, v, delta, phi - r)
        lo, hi = prob.refine_bracket()
        nonmono += not (np.diff(prob.g(np.linspace(lo, hi, 100))) < 0).all()
        z, _, status = z_update(ups, v, delta, phi, r)
        if status == "active":
            active += 1
            worst = max(worst, abs(constraint_value(ups, v, delta, z)))
    record(6, nonmono == 0 and worst < 1e-7 and active > 0,
           f"200 constraints, {nonmono} non-monotone scans, {active} active updates, "
           f"max |residual| {worst:.1e}")


def test_criterion_07_admm_quality():
    cfg = ScenarioConfig(num_cu=1, num_d2d=1, elements_per_ris=1, qos_threshold=0.5)
    t0 = time.perf_counter()
    worst, infeasible = -math.inf, 0
    for seed in range(50):
        ch = generate_channels(cfg, seed=seed)
        phi = np.ones(4, complex)
        pairing, powers, beams, _ = link_step(ch, phi, cfg)
        agg = aggregate_cascades(ch, pairing, powers, beams)
        rep = sinr_from_cascades(agg, phi, pairing, ch.noise_dr, ch.noise_bs)
        aux = update_xi(agg, phi, update_zeta(rep), pairing, ch.noise_dr, ch.noise_bs)
        q = assemble_qcqp(agg, aux, pairing, cfg.qos_threshold, ch.noise_dr, ch.noise_bs)
        x, diag = admm_solve(q, phi, AdmmConfig())
        oracle, _ = qcqp_exhaustive(q.upsilon, q.u, q.upsilon_c, q.v, q.delta)
        infeasible += not diag.feasible
        worst = max(worst, oracle - q.objective(x))
    elapsed = time.perf_counter() - t0
    record(7, worst <= 1e-2 and infeasible == 0 and elapsed < 300,
           f"50 instances NL=4 K=1, worst gap to quantized oracle {worst:.1e} (tol 1e-2), "
           f"{infeasible} infeasible, {elapsed:.1f} s")


def test_criterion_08_bcd_behavior():
    converged = iters = events = 0
    worst = 0.0
    for seed in range(50):
        _, _, trace, _ = run(BASE, "proposed", seed)
        converged += trace.converged
        d = np.diff(trace.sum_rate)
        iters += d.size
        events += int((d < 0).sum())
        worst = max([worst] + list(-d[d < 0]))
    frac = events / max(iters, 1)
    record(8, converged >= 48 and frac < 0.02 and worst < 1e-6,
           f"{converged}/50 converged within 30 iterations, {events} decrease events in "
           f"{iters} iterations ({100 * frac:.2f}%), largest {worst:.1e} nats")


def test_criterion_09_trends():
    parts, ok = [], True
    for name, (_, _, _, sign) in SWEEPS.items():
        res, elapsed = sweep_results(name)
        means = [m for _, m, _ in res]
        trend = all(sign * (b - a) > 0 for a, b in zip(means, means[1:]))
        beats = all(m > m0 for _, m, m0 in res)
        ok &= trend and beats and elapsed < 900
        parts.append(f"{name}: " + " ".join(f"{m:.3f}" for m in means)
                     + f" ({'increasing' if sign > 0 else 'decreasing'} {trend}, "
                     f"above no-RIS {beats}, {elapsed:.0f} s)")
    dist, cent, elapsed = deployment_results()
    ok &= dist >= cent and elapsed < 900
    parts.append(f"deployment: distributed {dist:.3f} vs centralized {cent:.3f} ({elapsed:.0f} s)")
    record(9, ok, f"{SEEDS} seeds per point; " + "; ".join(parts))


def test_criterion_10_robust_reduction():
    cfg = TWO
    fast = BcdConfig()
    worst_red = 0.0
    for seed in range(3):
        ch = generate_channels(cfg, seed=seed)
        a, _ = bcd_solve(ch, cfg, fast)
        b, _ = robust_bcd_solve(ch, CsiErrorModel(), cfg, fast)
        worst_red = max(worst_red,
                        float(np.max(np.abs(a.report.rate_d2d - b.report.rate_d2d))),
                        float(np.max(np.abs(a.report.rate_cu - b.report.rate_cu))))
    # Monte Carlo of the expected error powers: 100 pairs x 1000 draws
    rng = np.random.default_rng(10)
    ch = random_channels(rng, K=100, J=100, M=2, L=1, N=4)
    phi = random_phases(rng, 4)
    csi = CsiErrorModel(0.01, 0.02, 0.03, 0.04, 0.005, 0.006, 0.007, 0.008)
    w = np.array([1.0, 1.0j]) / np.sqrt(2)
    d1, d2 = [], []
    for seed in range(1000):
        e = compose_effective_channels(apply_csi_error(ch, csi, seed=seed)[1], phi)
        d1.append(0.8 * np.abs(e.h_d2d) ** 2 + 0.4 * np.abs(np.diag(e.h_cu_dr)) ** 2)
        d2.append(0.4 * np.abs(e.h_cu_bs @ w.conj()) ** 2 + 0.8 * np.abs(e.h_dt_bs @ w.conj()) ** 2)
    e_d, e_b = csi_noise_powers(csi, 4, 0.4, 0.8)
    mc = max(abs(np.mean(d1) / e_d - 1), abs(np.mean(d2) / e_b - 1))
    # lower bound versus variance scale on fixed channels
    scales = [0.0, 0.001, 0.01, 0.1]
    violations = 0
    curves = []
    for seed in range(5):
        ch = generate_channels(cfg, seed=seed)
        base = CsiErrorModel.relative(ch, 1.0)
        rates = []
        for s in scales:
            sol, _ = robust_bcd_solve(ch, base.scaled(s), cfg, fast)
            _RUNS[("robust", seed, s)] = (cfg, sol, None, 0.0)
            rates.append(sol.sum_rate)
        violations += int((np.diff(rates) > 1e-9).sum())
        curves.append(rates)
    mean_curve = " ".join(f"{x:.3f}" for x in np.mean(curves, axis=0))
    record(10, worst_red <= 1e-10 and mc <= 0.01 and violations == 0,
           f"zero-variance max rate diff {worst_red:.1e}; Monte Carlo rel err {100 * mc:.2f}% "
           f"(1e5 draws); lower bound over scales {scales}: mean {mean_curve}, "
           f"{violations} increases")


def test_criterion_11_qos_guarantee():
    # make sure the shared runs exist when this test runs alone
    for name in SWEEPS:
        sweep_results(name)
    deployment_results()
    for seed in range(50):
        run(BASE, "proposed", seed)
    checked = flagged = bad = 0
    for used, sol, _, _ in _RUNS.values():
        for k in range(sol.pairing.rho.shape[1]):
            if sol.pairing.partner_of_cu(k) is None:
                continue
            checked += 1
            if sol.report.gamma_cu[k] >= used.qos_threshold - QOS_TOL:
                continue
            if any(f.startswith("qos-infeasible") for f in sol.flags):
                flagged += 1
            else:
                bad += 1
    record(11, bad == 0,
           f"{len(_RUNS)} solutions, {checked} matched CUs, {flagged} flagged infeasible, "
           f"{bad} unflagged violations")


if __name__ == "__main__":
    import sys

    import pytest

    sys.exit(pytest.main([__file__, "-q"]))
