from __future__ import annotations

import json

import numpy as np
import pytest

from resilient_formation import cli, presets
from resilient_formation.config import ExperimentConfig, build_experiment
from resilient_formation.errors import ConfigError, EmptyConnectedSet


def write_cfg(tmp_path, cfg: ExperimentConfig, name="cfg.json"):
    path = tmp_path / name
    cfg.save(path)
    return str(path)


def test_committed_presets_match_builders():
    for name, fn in presets.PRESETS.items():
        committed = json.loads((presets.PRESET_DIR / f"{name}.json").read_text())
        assert committed == fn().to_dict()


def test_config_round_trip(tmp_path):
    cfg = presets.case2()
    back = ExperimentConfig.load(write_cfg(tmp_path, cfg))
    assert back == cfg
    assert ExperimentConfig.from_json(cfg.to_json()).to_dict() == cfg.to_dict()


def test_unknown_and_missing_keys():
    d = presets.case1().to_dict()
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({**d, "bogus": 1})
    d.pop("graphs")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(d)


def test_exit_code_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["validate", "--config", str(bad)]) == 2
    assert cli.main(["validate"]) == 2


def test_exit_code_solvability(tmp_path):
    cfg = presets.case1()
    cfg.leader = {"A0": [[1.0, 0.0], [0.0, 1.0]], "C0": [[0.0, 0.0], [0.0, 0.0]]}
    assert cli.main(["design-gains", "--config", write_cfg(tmp_path, cfg)]) == 3


def test_exit_code_large_pi(tmp_path):
    cfg = presets.case1()
    cfg.estimator["pi"] = 0.5
    assert cli.main(["validate", "--config", write_cfg(tmp_path, cfg)]) == 4


def test_empty_connected_set(tmp_path):
    cfg = presets.case1()
    cfg.graphs = [g for g in cfg.graphs if g["name"] != "G1"]
    with pytest.raises(EmptyConnectedSet):
        build_experiment(cfg)
    assert cli.main(["validate", "--config", write_cfg(tmp_path, cfg)]) == 4


def test_validate_preset_passes(tmp_path, capsys):
    csv_path = tmp_path / "act.csv"
    assert cli.main(["validate", "--preset", "case1", "--activation-csv", str(csv_path)]) == 0
    out = capsys.readouterr().out
    assert out.strip().endswith("PASS")
    rows = csv_path.read_text().splitlines()
    assert rows[0] == "t,T_c,T_b"
    t, tc, tb = map(float, rows[-1].split(","))
    assert tc + tb == pytest.approx(t)


def test_design_gains_document(tmp_path):
    out = tmp_path / "g.json"
    assert cli.main(["design-gains", "--preset", "case1", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["estimator"]["kappa0"] == 2.0
    assert len(doc["agents"]) == 6
    assert doc["validation"]["passed"]
    # a gains document can be fed back and is re-certified
    ex = build_experiment(presets.case1(), doc)
    np.testing.assert_allclose(ex.estimator.K0, doc["estimator"]["K0"])


def test_simulate_short_run(tmp_path, capsys):
    out = tmp_path / "run"
    rc = cli.main(["simulate", "--preset", "case1", "--horizon", "1", "--mode", "both", "--out", str(out)])
    assert rc == 0
    assert (out / "case1_resilient.csv").exists()
    assert (out / "case1_standard.csv").exists()
    summary = json.loads((out / "case1_summary.json").read_text())
    assert set(summary["runs"]) == {"resilient", "standard"}
    assert "comparison" in summary


def test_seed_redraws_initial_state():
    a = cli.reseed(presets.case1(), 1)
    b = cli.reseed(presets.case1(), 1)
    c = cli.reseed(presets.case1(), 2)
    assert a == b
    assert a.agents[0]["x0"] != c.agents[0]["x0"]
    assert all(-1 <= v <= 1 for ag in a.agents for v in ag["x0"])


def test_resilient_divergence_exit_code(tmp_path):
    cfg = presets.case1()
    cfg.compensation["rho_source"] = "output"
    cfg.integrator["dt"] = 1e-3
    rc = cli.main(["simulate", "--config", write_cfg(tmp_path, cfg), "--mode", "resilient",
                   "--out", str(tmp_path / "o")])
    assert rc == 5
