"""Monte Carlo experiment harness: sweeps, baselines, aggregation and export."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bcd_driver import BcdConfig, bcd_solve
from .channel_gen import FadingConfig, _rng, generate_channels
from .core_model import (
    DEFAULT_RIS_POSITIONS, ChannelSet, ScenarioConfig, SolutionState, evaluate_sinr,
)
from .passive_bf import AdmmConfig, FpConfig
from .serialization import (
    atomic_write_text, dump_json, fading_from_dict, fading_to_dict, scenario_from_dict,
    scenario_to_dict, solution_to_dict,
)

log = logging.getLogger(__name__)

SWEEP_VARIABLES = ("N", "M", "P", "qos", "J", "dt_x", "total_elements", "deployment")
BASELINES = ("no-ris", "random-phase", "fixed-max-power", "centralized-ris", "distributed-ris")
WORKERS_ENV = "RISD2D_WORKERS"
CENTRAL_RIS_POSITION = (500.0, 0.0)
QOS_CHECK_TOL = 1e-6
_RANDOM_PHASE_STREAM = 97


@dataclass
class SolverSettings:
    max_outer_iter: int = 30
    rel_tol: float = 1e-4
    fp_max_iter: int = 50
    fp_tol: float = 1e-5
    admm_max_iter: int = 200
    admm_tol: float = 1e-4
    admm_restarts: int = 0

    def bcd_config(self, **overrides) -> BcdConfig:
        admm = AdmmConfig(max_iter=self.admm_max_iter, tol=self.admm_tol,
                          restarts=self.admm_restarts)
        fp = FpConfig(max_iter=self.fp_max_iter, tol=self.fp_tol, admm=admm)
        return BcdConfig(max_outer_iter=self.max_outer_iter, rel_tol=self.rel_tol, fp=fp,
                         **overrides)


@dataclass
class ExperimentSpec:
    """One sweep: a base scenario, a swept variable and the schemes to run.

    ``P`` values are in watts and set both power limits; ``qos`` is the
    linear SINR threshold; ``dt_x`` places every DT at (x, 0);
    ``total_elements`` splits NL evenly over the RISs of the scenario;
    ``deployment`` takes "centralized" (one RIS at (500, 0)) or
    "distributed" (the four cell-edge RISs) with the scenario's NL.
    """

    scenario: ScenarioConfig
    sweep: str
    values: Sequence
    num_seeds: int = 20
    baselines: Sequence[str] = ()
    output: Optional[str] = None
    seed_offset: int = 0
    fading: FadingConfig = field(default_factory=FadingConfig)
    solver: SolverSettings = field(default_factory=SolverSettings)
    name: str = "experiment"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.sweep not in SWEEP_VARIABLES:
            raise ValueError(f"unknown sweep variable {self.sweep!r}; choose from {SWEEP_VARIABLES}")
        if len(self.values) == 0:
            raise ValueError("sweep values must be nonempty")
        if self.num_seeds < 1:
            raise ValueError("num_seeds must be >= 1")
        bad = set(self.baselines) - set(BASELINES)
        if bad:
            raise ValueError(f"unknown baselines {sorted(bad)}; choose from {BASELINES}")

    @property
    def schemes(self) -> list[str]:
        return ["proposed"] + list(self.baselines)

    def to_dict(self) -> dict:
        return {"name": self.name, "scenario": scenario_to_dict(self.scenario), "sweep": self.sweep,
                "values": list(self.values), "num_seeds": self.num_seeds,
                "baselines": list(self.baselines), "output": self.output,
                "seed_offset": self.seed_offset, "fading": fading_to_dict(self.fading),
                "solver": dataclasses.asdict(self.solver)}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        scenario = scenario_from_dict(d.pop("scenario", {}))
        fading = fading_from_dict(d.pop("fading", {}))
        solver = SolverSettings(**d.pop("solver", {}))
        return cls(scenario=scenario, fading=fading, solver=solver, **d)


@dataclass
class ResultRow:
    sweep_value: object
    scheme: str
    mean_sum_rate: float
    std_sum_rate: float
    mean_rate_d2d: list
    mean_rate_cu: list
    qos_violation_fraction: float
    infeasible_fraction: float
    mean_outer_iterations: float
    num_seeds: int
    wall_time: float = field(default=0.0, compare=False)


@dataclass
class InstanceResult:
    sweep_value: object
    seed: int
    scheme: str
    scenario: dict
    sum_rate: float
    rate_d2d: list
    rate_cu: list
    qos_violation: bool
    infeasible: bool
    outer_iterations: int
    wall_time: float
    solution: dict
    trace: dict


# ----------------------------------------------------------------------
# scenario construction
# ----------------------------------------------------------------------

def apply_sweep(cfg: ScenarioConfig, variable: str, value) -> ScenarioConfig:
    rep = dataclasses.replace
    if variable == "N":
        return rep(cfg, elements_per_ris=int(value))
    if variable == "M":
        return rep(cfg, bs_antennas=int(value))
    if variable == "P":
        return rep(cfg, p_max_cu=float(value), p_max_d2d=float(value))
    if variable == "qos":
        return rep(cfg, qos_threshold=float(value))
    if variable == "J":
        return rep(cfg, num_d2d=int(value))
    if variable == "dt_x":
        return rep(cfg, dt_positions=[(float(value), 0.0)] * cfg.num_d2d)
    if variable == "total_elements":
        total = int(value)
        if total % cfg.num_ris:
            raise ValueError(f"{total} elements do not split over {cfg.num_ris} RISs")
        return rep(cfg, elements_per_ris=total // cfg.num_ris)
    if variable == "deployment":
        return deployment_scenario(cfg, str(value))
    raise ValueError(f"unknown sweep variable {variable!r}")


def deployment_scenario(cfg: ScenarioConfig, mode: str) -> ScenarioConfig:
    """Same total element count on one central RIS or on the four edge RISs."""
    total = cfg.num_elements
    if mode == "centralized":
        return dataclasses.replace(cfg, ris_positions=(CENTRAL_RIS_POSITION,),
                                   elements_per_ris=total)
    if mode == "distributed":
        L = len(DEFAULT_RIS_POSITIONS)
        if total % L:
            raise ValueError(f"{total} elements do not split over {L} RISs")
        return dataclasses.replace(cfg, ris_positions=DEFAULT_RIS_POSITIONS,
                                   elements_per_ris=total // L)
    raise ValueError(f"unknown deployment mode {mode!r}")


def random_phases(size: int, seed: int) -> np.ndarray:
    return np.exp(1j * _rng(seed, _RANDOM_PHASE_STREAM).uniform(0.0, 2 * np.pi, size))


def solve_scheme(cfg: ScenarioConfig, scheme: str, seed: int, fading: FadingConfig,
                 solver: SolverSettings):
    """Generate the channels of ``seed`` and solve them with ``scheme``.

    Returns (scenario used, channels, SolutionState, BcdTrace).
    """
    phi0 = None
    overrides = {}
    if scheme == "no-ris":
        cfg = dataclasses.replace(cfg, ris_positions=())
    elif scheme == "random-phase":
        phi0 = random_phases(cfg.num_elements, seed)
        overrides["optimize_phases"] = False
    elif scheme == "fixed-max-power":
        overrides["fixed_power"] = True
    elif scheme == "centralized-ris":
        cfg = deployment_scenario(cfg, "centralized")
    elif scheme == "distributed-ris":
        cfg = deployment_scenario(cfg, "distributed")
    elif scheme != "proposed":
        raise ValueError(f"unknown scheme {scheme!r}")
    channels = generate_channels(cfg, fading=fading, seed=seed)
    sol, trace = bcd_solve(channels, cfg, solver.bcd_config(**overrides), phi0)
    return cfg, channels, sol, trace


def qos_violated(sol: SolutionState, cfg: ScenarioConfig, tol: float = QOS_CHECK_TOL) -> bool:
    """A matched CU misses its SINR threshold by more than ``tol``."""
    matched = sol.pairing.rho.sum(axis=0) > 0
    return bool(np.any(matched & (sol.report.gamma_cu < cfg.qos_threshold - tol)))


def _run_instance(args) -> InstanceResult:
    base, variable, value, seed, scheme, fading, solver = args
    t0 = time.perf_counter()
    cfg = apply_sweep(base, variable, value)
    cfg, _, sol, trace = solve_scheme(cfg, scheme, seed, fading, solver)
    return InstanceResult(
        sweep_value=value, seed=seed, scheme=scheme, scenario=scenario_to_dict(cfg),
        sum_rate=sol.sum_rate, rate_d2d=sol.report.rate_d2d.tolist(),
        rate_cu=sol.report.rate_cu.tolist(), qos_violation=qos_violated(sol, cfg),
        infeasible=any(f.startswith("qos-infeasible") for f in sol.flags),
        outer_iterations=trace.iterations, wall_time=time.perf_counter() - t0,
        solution=solution_to_dict(sol), trace=trace.to_dict())


def worker_count(default: int = 1) -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return default
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(n, 1)


def run_instances(spec: ExperimentSpec, workers: Optional[int] = None) -> list[InstanceResult]:
    tasks = [(spec.scenario, spec.sweep, v, spec.seed_offset + s, scheme, spec.fading, spec.solver)
             for v in spec.values for s in range(spec.num_seeds) for scheme in spec.schemes]
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_instance, tasks))
    else:
        results = [_run_instance(t) for t in tasks]
    order = {json.dumps(v): i for i, v in enumerate(spec.values)}
    schemes = {s: i for i, s in enumerate(spec.schemes)}
    results.sort(key=lambda r: (order[json.dumps(r.sweep_value)], schemes[r.scheme], r.seed))
    return results


def aggregate(results: Sequence[InstanceResult], spec: ExperimentSpec) -> list[ResultRow]:
    rows = []
    for v in spec.values:
        for scheme in spec.schemes:
            group = [r for r in results if r.scheme == scheme and r.sweep_value == v]
            if not group:
                continue
            rates = np.array([r.sum_rate for r in group])
            rows.append(ResultRow(
                sweep_value=v, scheme=scheme, mean_sum_rate=float(rates.mean()),
                std_sum_rate=float(rates.std()),
                mean_rate_d2d=np.mean([r.rate_d2d for r in group], axis=0).tolist(),
                mean_rate_cu=np.mean([r.rate_cu for r in group], axis=0).tolist(),
                qos_violation_fraction=float(np.mean([r.qos_violation for r in group])),
                infeasible_fraction=float(np.mean([r.infeasible for r in group])),
                mean_outer_iterations=float(np.mean([r.outer_iterations for r in group])),
                num_seeds=len(group), wall_time=float(sum(r.wall_time for r in group))))
    return rows


def run_experiment(spec: ExperimentSpec, workers: Optional[int] = None,
                   keep_instances: bool = False):
    """Run every (value, seed, scheme) of ``spec`` and aggregate.

    Returns the list of ResultRows, or (rows, instances) with ``keep_instances``.
    Solver flags are recorded, never raised.
    """
    spec.validate()
    instances = run_instances(spec, workers)
    rows = aggregate(instances, spec)
    return (rows, instances) if keep_instances else rows


# ----------------------------------------------------------------------
# power decomposition
# ----------------------------------------------------------------------

@dataclass
class PowerProportion:
    """Received-power decomposition; ``normalized`` divides by the largest entry.

    Keys of ``raw``: bs_* arrays are per CU, dr_* arrays per D2D pair. The
    ``*_useful_cross`` terms are the coherent cross products between the
    direct and reflected useful signals, so direct + reflected + cross is
    the total useful power.
    """

    raw: dict
    normalized: dict


def power_proportion_report(sol: SolutionState, channels: ChannelSet) -> PowerProportion:
    c = channels.cascades()
    phi = sol.phi
    rho = sol.pairing.rho
    p_c, p_d = sol.powers.p_cu, sol.powers.p_d2d
    w_h = sol.beams.w.conj()
    active = rho.sum(axis=1) > 0

    d_c = np.einsum("km,km->k", w_h, channels.g_cu_bs)
    r_c = np.einsum("km,kmn,n->k", w_h, c.cu_bs, phi)
    d_dt = w_h @ channels.f_dt_bs.T                             # (K, J)
    r_dt = np.einsum("km,jmn,n->kj", w_h, c.dt_bs, phi)
    d_d = channels.g_d2d
    r_d = c.d2d @ phi
    d_cd = channels.f_cu_dr                                     # (K, J)
    r_cd = c.cu_dr @ phi

    raw = {
        "bs_useful_direct": p_c * np.abs(d_c) ** 2,
        "bs_useful_reflected": p_c * np.abs(r_c) ** 2,
        "bs_useful_cross": 2 * p_c * np.real(d_c.conj() * r_c),
        "bs_interference_direct": (rho.T * p_d * np.abs(d_dt) ** 2).sum(axis=1),
        "bs_interference_reflected": (rho.T * p_d * np.abs(r_dt) ** 2).sum(axis=1),
        "dr_useful_direct": np.where(active, p_d * np.abs(d_d) ** 2, 0.0),
        "dr_useful_reflected": np.where(active, p_d * np.abs(r_d) ** 2, 0.0),
        "dr_useful_cross": np.where(active, 2 * p_d * np.real(d_d.conj() * r_d), 0.0),
        "dr_interference_direct": (rho * (p_c * np.abs(d_cd.T) ** 2)).sum(axis=1),
        "dr_interference_reflected": (rho * (p_c * np.abs(r_cd.T) ** 2)).sum(axis=1),
    }
    peak = max((float(np.max(np.abs(v))) for v in raw.values() if v.size), default=0.0)
    scale = peak if peak > 0 else 1.0
    return PowerProportion(raw=raw, normalized={k: v / scale for k, v in raw.items()})


# ----------------------------------------------------------------------
# export
# ----------------------------------------------------------------------

CSV_HEADER = ("sweep_value", "scheme", "mean_sum_rate", "std_sum_rate", "mean_rate_d2d",
              "mean_rate_cu", "qos_violation_fraction", "infeasible_fraction",
              "mean_outer_iterations", "num_seeds", "wall_time")


def rows_to_csv(rows: Sequence[ResultRow]) -> str:
    """CSV text; floats are written with repr and lists/values as JSON."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(CSV_HEADER)
    for r in rows:
        writer.writerow([json.dumps(r.sweep_value), r.scheme, repr(r.mean_sum_rate),
                         repr(r.std_sum_rate), json.dumps(r.mean_rate_d2d),
                         json.dumps(r.mean_rate_cu), repr(r.qos_violation_fraction),
                         repr(r.infeasible_fraction), repr(r.mean_outer_iterations),
                         r.num_seeds, repr(r.wall_time)])
    return buf.getvalue()


def read_csv(path) -> list[ResultRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [ResultRow(sweep_value=json.loads(d["sweep_value"]), scheme=d["scheme"],
                          mean_sum_rate=float(d["mean_sum_rate"]),
                          std_sum_rate=float(d["std_sum_rate"]),
                          mean_rate_d2d=json.loads(d["mean_rate_d2d"]),
                          mean_rate_cu=json.loads(d["mean_rate_cu"]),
                          qos_violation_fraction=float(d["qos_violation_fraction"]),
                          infeasible_fraction=float(d["infeasible_fraction"]),
                          mean_outer_iterations=float(d["mean_outer_iterations"]),
                          num_seeds=int(d["num_seeds"]), wall_time=float(d["wall_time"]))
                for d in reader]


def export_results(rows: Sequence[ResultRow], path, fmt: str = "csv",
                   spec: Optional[ExperimentSpec] = None,
                   instances: Optional[Sequence[InstanceResult]] = None):
    """Write rows as CSV or JSON (JSON optionally carries per-instance traces)."""
    if not rows:
        raise ValueError("nothing to export")
    if fmt == "csv":
        atomic_write_text(path, rows_to_csv(rows))
    elif fmt == "json":
        doc = {"rows": [dataclasses.asdict(r) for r in rows]}
        if spec is not None:
            doc["spec"] = spec.to_dict()
        if instances is not None:
            doc["instances"] = [dataclasses.asdict(i) for i in instances]
        dump_json(doc, path)
    else:
        raise ValueError(f"unknown format {fmt!r}")


def replay_instance(record: dict, fading: Optional[FadingConfig] = None, resolve: bool = False,
                    solver: Optional[SolverSettings] = None):
    """Recompute the sum rate of an exported instance.

    The channels are regenerated from the stored scenario and seed. With
    ``resolve`` the scheme is solved again; otherwise the stored decision
    is re-evaluated. Returns (recomputed sum rate, stored sum rate).
    """
    from .serialization import solution_from_dict

    cfg = scenario_from_dict(record["scenario"])
    fading = fading or FadingConfig()
    if resolve:
        scheme = record["scheme"]
        # the stored scenario already reflects deployment/no-ris changes
        if scheme in ("no-ris", "centralized-ris", "distributed-ris"):
            scheme = "proposed"
        _, _, sol, _ = solve_scheme(cfg, scheme, record["seed"], fading, solver or SolverSettings())
        return sol.sum_rate, record["sum_rate"]
    sol = solution_from_dict(record["solution"])
    channels = generate_channels(cfg, fading=fading, seed=record["seed"])
    rep = evaluate_sinr(channels, sol.phi, sol.pairing, sol.powers, sol.beams)
    return rep.sum_rate, record["sum_rate"]


def summarize(rows: Sequence[ResultRow]) -> str:
    lines = [f"{'value':>14} {'scheme':>16} {'mean':>10} {'std':>9} {'qos-viol':>8}"]
    for r in rows:
        lines.append(f"{json.dumps(r.sweep_value):>14} {r.scheme:>16} {r.mean_sum_rate:10.4f} "
                     f"{r.std_sum_rate:9.4f} {r.qos_violation_fraction:8.3f}")
    return "\n".join(lines)

