"""Command-line entry point.

    risd2d run SPEC.json [-o OUT] [--format csv|json] [--workers N]
    risd2d preset NAME [--seeds N] [-o OUT] [--format csv|json]
    risd2d presets
    risd2d replay RESULTS.json [--index I] [--resolve]

Exit status is 0 on success and 1 on any hard error (bad spec, I/O
failure, replay mismatch).
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .core_model import ScenarioConfig
from .experiments import (
    ExperimentSpec, SolverSettings, export_results, replay_instance, run_experiment, summarize,
)
from .serialization import fading_from_dict, load_json

log = logging.getLogger("risd2d")

_FIG_SINGLE = dict(num_cu=1, num_d2d=1)


def _presets() -> dict:
    """Sweep presets named after the simulation studies they mirror."""
    base = ScenarioConfig()
    rep = dataclasses.replace
    return {
        "dt-position": ExperimentSpec(
            rep(base, cu_positions=[(400.0, 0.0)], dt_positions=[(200.0, 0.0)], **_FIG_SINGLE),
            "dt_x", [200.0, 225.0, 250.0, 275.0, 300.0], baselines=["no-ris", "random-phase"],
            name="dt-position"),
        "bs-antennas": ExperimentSpec(
            rep(base, **_FIG_SINGLE), "M", [2, 4, 6, 8], baselines=["no-ris", "random-phase"],
            name="bs-antennas"),
        "qos-threshold": ExperimentSpec(
            rep(base, elements_per_ris=5, **_FIG_SINGLE), "qos", [0.5, 2.0, 8.0, 32.0, 128.0],
            baselines=["no-ris", "random-phase"], name="qos-threshold"),
        "power-control": ExperimentSpec(
            rep(base, cu_positions=[(400.0, 0.0)], dt_positions=[(300.0, 0.0)], **_FIG_SINGLE),
            "P", [0.005, 0.01, 0.02, 0.04], baselines=["fixed-max-power"], name="power-control"),
        "deployment": ExperimentSpec(
            rep(base, num_cu=2, num_d2d=2), "P", [0.01, 0.02, 0.04],
            baselines=["centralized-ris", "distributed-ris"], name="deployment"),
        "max-power": ExperimentSpec(
            base, "P", [0.005, 0.01, 0.02, 0.04], baselines=["no-ris", "random-phase"],
            name="max-power"),
        "d2d-pairs": ExperimentSpec(
            rep(base, num_cu=10), "J", [1, 2, 4, 6], baselines=["no-ris"], name="d2d-pairs"),
        "total-elements": ExperimentSpec(
            base, "total_elements", [16, 32, 48, 64], baselines=["no-ris"], name="total-elements"),
        "elements-per-ris": ExperimentSpec(
            base, "N", [10, 15, 20], baselines=["no-ris"], name="elements-per-ris"),
    }


PRESETS = tuple(_presets())


def get_preset(name: str, seeds: int | None = None) -> ExperimentSpec:
    presets = _presets()
    if name not in presets:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(presets)}")
    spec = presets[name]
    if seeds is not None:
        spec = dataclasses.replace(spec, num_seeds=seeds)
    return spec


def _run(spec: ExperimentSpec, out: str | None, fmt: str, workers: int | None) -> int:
    rows, instances = run_experiment(spec, workers=workers, keep_instances=True)
    print(summarize(rows))
    out = out or spec.output
    if out:
        export_results(rows, out, fmt, spec=spec, instances=instances if fmt == "json" else None)
        print(f"wrote {out}")
    return 0


def _replay(path: str, index: int, resolve: bool, tol: float) -> int:
    doc = load_json(path)
    instances = doc.get("instances")
    if not instances:
        raise ValueError(f"{path} has no per-instance records; export with --format json")
    record = instances[index]
    spec = doc.get("spec", {})
    fading = fading_from_dict(spec["fading"]) if "fading" in spec else None
    solver = SolverSettings(**spec["solver"]) if "solver" in spec else None
    got, stored = replay_instance(record, fading=fading, resolve=resolve, solver=solver)
    ok = abs(got - stored) <= tol * max(1.0, abs(stored))
    print(f"instance {index} (scheme={record['scheme']}, seed={record['seed']}, "
          f"value={record['sweep_value']}): stored {stored:.12g}, replayed {got:.12g} "
          f"-> {'match' if ok else 'MISMATCH'}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="risd2d", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment spec (JSON)")
    r.add_argument("spec")
    r.add_argument("-o", "--output")
    r.add_argument("--format", choices=("csv", "json"), default="csv")
    r.add_argument("--workers", type=int)

    pr = sub.add_parser("preset", help="run a named sweep preset")
    pr.add_argument("name")
    pr.add_argument("--seeds", type=int)
    pr.add_argument("-o", "--output")
    pr.add_argument("--format", choices=("csv", "json"), default="csv")
    pr.add_argument("--workers", type=int)

    sub.add_parser("presets", help="list preset names")

    rp = sub.add_parser("replay", help="re-evaluate one exported instance")
    rp.add_argument("results")
    rp.add_argument("--index", type=int, default=0)
    rp.add_argument("--resolve", action="store_true", help="solve again instead of re-evaluating")
    rp.add_argument("--tol", type=float, default=1e-9)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            spec = ExperimentSpec.from_dict(load_json(args.spec))
            return _run(spec, args.output, args.format, args.workers)
        if args.command == "preset":
            return _run(get_preset(args.name, args.seeds), args.output, args.format, args.workers)
        if args.command == "presets":
            for name, spec in _presets().items():
                print(f"{name:18s} sweep={spec.sweep} values={list(spec.values)}")
            return 0
        if args.command == "replay":
            return _replay(args.results, args.index, args.resolve, args.tol)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 1


if __name__ == "__main__":
    sys.exit(main())
