"""JSON encoding of configurations, channels and solutions.

Complex arrays are written as nested lists of ``[re, im]`` pairs so that a
round trip is exact.
"""
from __future__ import annotations

import dataclasses
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .channel_gen import FadingConfig
from .core_model import (
    BeamformerSet, ChannelSet, Pairing, PowerAllocation, ScenarioConfig, SinrReport, SolutionState,
)


def encode_complex(x) -> list:
    x = np.asarray(x, dtype=complex)
    return np.stack([x.real, x.imag], axis=-1).tolist()


def decode_complex(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.size == 0:
        return np.zeros(arr.shape[:-1] if arr.ndim > 1 else (0,), complex)
    return arr[..., 0] + 1j * arr[..., 1]


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    d = dataclasses.asdict(cfg)
    for key in ("ris_positions", "cu_positions", "dt_positions"):
        if d[key] is not None:
            d[key] = [list(map(float, p)) for p in d[key]]
    d["cu_ring"] = list(d["cu_ring"])
    d["d2d_distance"] = list(d["d2d_distance"])
    return d


def scenario_from_dict(d: dict) -> ScenarioConfig:
    names = {f.name for f in dataclasses.fields(ScenarioConfig)}
    unknown = set(d) - names
    if unknown:
        raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
    return ScenarioConfig(**d)


def fading_to_dict(f: FadingConfig) -> dict:
    return dataclasses.asdict(f)


def fading_from_dict(d: dict) -> FadingConfig:
    return FadingConfig(**d)


_CHANNEL_ARRAYS = ("g_cu_bs", "g_d2d", "f_cu_dr", "f_dt_bs", "s_cu_ris", "s_ris_bs",
                   "s_dt_ris", "s_ris_dr")


def channels_to_dict(ch: ChannelSet) -> dict:
    d = {name: encode_complex(getattr(ch, name)) for name in _CHANNEL_ARRAYS}
    d["shapes"] = {name: list(getattr(ch, name).shape) for name in _CHANNEL_ARRAYS}
    d["noise_dr"] = float(ch.noise_dr)
    d["noise_bs"] = float(ch.noise_bs)
    if ch.cascades_override is not None:
        c = ch.cascades_override
        d["cascades"] = {n: encode_complex(getattr(c, n)) for n in ("d2d", "cu_dr", "cu_bs", "dt_bs")}
        d["cascade_shapes"] = {n: list(getattr(c, n).shape) for n in ("d2d", "cu_dr", "cu_bs", "dt_bs")}
    return d


def channels_from_dict(d: dict) -> ChannelSet:
    from .core_model import Cascades

    arrays = {n: decode_complex(d[n]).reshape(d["shapes"][n]) for n in _CHANNEL_ARRAYS}
    override = None
    if "cascades" in d:
        override = Cascades(**{n: decode_complex(v).reshape(d["cascade_shapes"][n])
                               for n, v in d["cascades"].items()})
    return ChannelSet(noise_dr=d["noise_dr"], noise_bs=d["noise_bs"], cascades_override=override,
                      **arrays)


def solution_to_dict(sol: SolutionState) -> dict:
    return {
        "assignment": [None if k is None else int(k) for k in sol.pairing.assignment],
        "num_cu": int(sol.pairing.rho.shape[1]),
        "p_cu": sol.powers.p_cu.tolist(),
        "p_d2d": sol.powers.p_d2d.tolist(),
        "w": encode_complex(sol.beams.w),
        "bs_antennas": int(sol.beams.w.shape[1]),
        "phi": encode_complex(sol.phi),
        "gamma_d2d": sol.report.gamma_d2d.tolist(),
        "gamma_cu": sol.report.gamma_cu.tolist(),
        "sum_rate": float(sol.sum_rate),
        "flags": list(sol.flags),
    }


def solution_from_dict(d: dict) -> SolutionState:
    K = d["num_cu"]
    w = decode_complex(d["w"]).reshape(K, d["bs_antennas"])
    return SolutionState(
        pairing=Pairing.from_assignment(d["assignment"], K),
        powers=PowerAllocation(p_cu=np.array(d["p_cu"], float), p_d2d=np.array(d["p_d2d"], float)),
        beams=BeamformerSet(w=w),
        phi=decode_complex(d["phi"]).reshape(-1),
        report=SinrReport(gamma_d2d=np.array(d["gamma_d2d"], float),
                          gamma_cu=np.array(d["gamma_cu"], float)),
        flags=list(d["flags"]),
    )


def atomic_write_text(path, text: str):
    """Write ``text`` to ``path`` through a temporary file and rename."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"could not write {path}: {exc}") from exc


def dump_json(obj, path):
    atomic_write_text(path, json.dumps(obj, indent=1))


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise OSError(f"could not read {path}: {exc}") from exc
