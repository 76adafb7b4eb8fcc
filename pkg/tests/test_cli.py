import json

import pytest

from risd2d.cli import PRESETS, get_preset, main
from risd2d.experiments import read_csv

SPEC = {
    "name": "tiny",
    "scenario": {"num_cu": 1, "num_d2d": 1, "elements_per_ris": 2, "bs_antennas": 2},
    "sweep": "qos",
    "values": [0.5, 1.0],
    "num_seeds": 1,
    "baselines": ["no-ris"],
    "solver": {"max_outer_iter": 3, "fp_max_iter": 3, "admm_max_iter": 50},
}


@pytest.fixture
def spec_file(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(SPEC))
    return path


def test_run_csv(spec_file, tmp_path, capsys):
    out = tmp_path / "rows.csv"
    assert main(["run", str(spec_file), "-o", str(out)]) == 0
    rows = read_csv(out)
    assert [(r.sweep_value, r.scheme) for r in rows] == [
        (0.5, "proposed"), (0.5, "no-ris"), (1.0, "proposed"), (1.0, "no-ris")]
    assert "proposed" in capsys.readouterr().out


def test_run_json_then_replay(spec_file, tmp_path, capsys):
    out = tmp_path / "rows.json"
    assert main(["run", str(spec_file), "-o", str(out), "--format", "json"]) == 0
    assert main(["replay", str(out), "--index", "1"]) == 0
    assert main(["replay", str(out), "--index", "0", "--resolve"]) == 0
    assert "match" in capsys.readouterr().out


def test_replay_detects_tampering(spec_file, tmp_path):
    out = tmp_path / "rows.json"
    main(["run", str(spec_file), "-o", str(out), "--format", "json"])
    doc = json.loads(out.read_text())
    doc["instances"][0]["sum_rate"] += 1.0
    out.write_text(json.dumps(doc))
    assert main(["replay", str(out)]) == 1


def test_hard_errors(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**SPEC, "sweep": "bandwidth"}))
    assert main(["run", str(bad)]) == 1
    assert main(["preset", "no-such-preset"]) == 1
    assert "error" in capsys.readouterr().err


def test_presets_listed(capsys):
    assert main(["presets"]) == 0
    out = capsys.readouterr().out
    for name in PRESETS:
        assert name in out


def test_preset_seed_override():
    spec = get_preset("deployment", seeds=3)
    assert spec.num_seeds == 3
    assert set(spec.baselines) == {"centralized-ris", "distributed-ris"}
