import json
from pathlib import Path

import numpy as np
import pytest

from flockcontain.engine import run
from flockcontain.fileio import (EVENTS, METRIC_COLUMNS, METRICS, SUMMARY, TRAJECTORY,
                                 ScenarioError, ScenarioRejected, bundled_scenario,
                                 config_to_dict, fmt, parse_scenario, serialize_scenario,
                                 trajectory_header, write_outputs, write_scenario)
from flockcontain.scenarios import all_normal_scenario, experiment_scenario

SCENARIO_DIR = Path(__file__).resolve().parents[1] / "scenarios"


def _normalized(text):
    return json.dumps(json.loads(text), sort_keys=True)


@pytest.mark.parametrize("path", sorted(SCENARIO_DIR.glob("*.json")) + [bundled_scenario()],
                         ids=lambda p: p.name)
def test_round_trip(path):
    cfg = parse_scenario(path, validate=False)
    assert _normalized(serialize_scenario(cfg)) == _normalized(path.read_text())


def test_bundled_fixture_is_the_experiment():
    cfg = parse_scenario(bundled_scenario())
    assert config_to_dict(cfg) == config_to_dict(experiment_scenario())
    assert cfg.malicious.k.tolist() == [0.8, 0.0, 450000.0]


def test_empty_file_rejected(tmp_path):
    p = tmp_path / "empty.json"
    p.write_text("")
    with pytest.raises(ScenarioError):
        parse_scenario(p)


def test_malformed_json_rejected(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ScenarioError):
        parse_scenario(p)


def _doc():
    return json.loads(serialize_scenario(experiment_scenario()))


def _write(tmp_path, doc):
    p = tmp_path / "s.json"
    p.write_text(json.dumps(doc))
    return p


def test_unknown_key_rejected(tmp_path):
    doc = _doc()
    doc["leader"]["colour"] = "red"
    with pytest.raises(ScenarioError, match="leader"):
        parse_scenario(_write(tmp_path, doc))


def test_missing_key_rejected(tmp_path):
    doc = _doc()
    del doc["dt"]
    with pytest.raises(ScenarioError):
        parse_scenario(_write(tmp_path, doc))


def test_wrong_schema_version_rejected(tmp_path):
    doc = _doc()
    doc["schema_version"] = "0.9"
    with pytest.raises(ScenarioError):
        parse_scenario(_write(tmp_path, doc))


def test_nan_rejected(tmp_path):
    text = serialize_scenario(experiment_scenario()).replace('"dt": 0.001', '"dt": NaN')
    p = tmp_path / "nan.json"
    p.write_text(text)
    with pytest.raises(ScenarioError):
        parse_scenario(p)


def test_wide_polygon_fails_validation_by_name(tmp_path):
    doc = _doc()
    doc["leader"]["delta_bar"] = 14.0
    with pytest.raises(ScenarioRejected) as exc:
        parse_scenario(_write(tmp_path, doc))
    assert exc.value.report.names == ["δ̄ < R/2"]


def test_format_fixed_digits():
    assert fmt(0.0) == "0"
    assert fmt(1 / 3) == "0.333333333333"
    assert fmt(float("nan")) == "nan" and fmt(-float("inf")) == "-inf"
    assert fmt(123456789012345.0) == "1.23456789012e+14"


@pytest.fixture(scope="module")
def toy_record():
    return run(all_normal_scenario(t_end=0.002, dt=1e-3))


def test_two_step_trajectory_rows(toy_record, tmp_path):
    paths = write_outputs(toy_record, tmp_path)
    lines = paths[TRAJECTORY].read_text().splitlines()
    N = toy_record.plan.N
    assert len(lines) == (2 + 1) * N + 1
    assert lines[0].split(",") == trajectory_header(2)
    assert lines[0] == "t,agent_id,x0,x1,v0,v1,u0,u1"
    metrics = paths[METRICS].read_text().splitlines()
    assert metrics[0].split(",") == list(METRIC_COLUMNS)
    assert len(metrics) == 3 + 1
    summary = json.loads(paths[SUMMARY].read_text())
    assert summary["steps"] == 2
    assert paths[EVENTS].read_text() == ""


def test_trajectory_values_parse_back(toy_record, tmp_path):
    paths = write_outputs(toy_record, tmp_path)
    data = np.loadtxt(paths[TRAJECTORY], delimiter=",", skiprows=1)
    N = toy_record.plan.N
    X = data[:, 2:4].reshape(3, N, 2)
    assert np.allclose(X, toy_record.X, rtol=1e-11)


def test_rerun_outputs_byte_identical(tmp_path):
    cfg_path = write_scenario(all_normal_scenario(t_end=0.05), tmp_path / "s.json")
    bundles = []
    for k in range(2):
        rec = run(parse_scenario(cfg_path))
        bundles.append(write_outputs(rec, tmp_path / f"out{k}"))
    for name in (TRAJECTORY, METRICS, EVENTS, SUMMARY):
        assert bundles[0][name].read_bytes() == bundles[1][name].read_bytes()


def test_events_log_lines(tmp_path):
    cfg = all_normal_scenario(t_end=0.002)
    cfg.agents[1].position = cfg.agents[0].position.copy()
    rec = run(cfg, force=True)
    paths = write_outputs(rec, tmp_path)
    t, kind, payload = paths[EVENTS].read_text().splitlines()[0].split("\t")
    assert (t, kind) == ("0", "collision")
    assert json.loads(payload) == {"distance": 0.0, "i": 0, "j": 1}
