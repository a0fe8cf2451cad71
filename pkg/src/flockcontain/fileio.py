"""Scenario files in, result bundles out.

Scenarios are JSON documents that mirror :class:`ScenarioConfig` key for key
(every key is required, unknown keys are rejected). Results are four files:
``trajectory.csv``, ``metrics.csv``, ``events.log`` and ``summary.json``,
written with fixed 12-significant-digit formatting so identical records give
identical bytes.
"""
from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .core import (MODES, AgentState, EstimatorGains, FollowerParams, LeaderParams,
                   MaliciousParams, ScenarioConfig, validate_scenario)
from .engine import SimulationRecord, summarize

SCHEMA_VERSION = "1.0"

_num = {"type": "number"}
_vec = {"type": "array", "items": _num, "minItems": 1}
_vec3 = {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}


def _obj(props: dict) -> dict:
    return {"type": "object", "properties": props, "required": sorted(props),
            "additionalProperties": False}


def _nullable(schema: dict) -> dict:
    return {"anyOf": [schema, {"type": "null"}]}


_edge_map = {"type": "object", "patternProperties": {r"^\d+-\d+$": _num},
             "additionalProperties": False}

SCENARIO_SCHEMA = _obj({
    "schema_version": {"const": SCHEMA_VERSION},
    "name": {"type": "string"},
    "R": _num,
    "E": _num,
    "mode": {"enum": list(MODES)},
    "dt": _num,
    "t_end": _num,
    "seed": {"type": "integer"},
    "collision_distance": _num,
    "agents": {"type": "array", "minItems": 1, "items": _obj({
        "id": {"type": "integer"}, "position": _vec, "velocity": _vec})},
    "malicious_id": _nullable({"type": "integer"}),
    "malicious": _nullable(_obj({"k_v": _num, "k_a": _num, "k_r": _num, "k_bar": _vec3})),
    "leader": _obj({
        "kappa_v": _num, "kappa_x": _num, "delta_bar": _num,
        "H_bar": _nullable(_num), "iota": _num, "orientation": _nullable(_num),
        "desired_displacements": _nullable({
            "type": "object", "patternProperties": {r"^\d+$": _vec},
            "additionalProperties": False}),
    }),
    "follower": _obj({"gamma": _num, "alpha0": _num, "deadband": _num,
                      "edge_gamma": _edge_map, "edge_alpha0": _edge_map}),
    "estimator": _obj({"a": _num, "k_hat0": _vec3,
                       "Gamma": {"type": "array", "items": _vec3, "minItems": 3, "maxItems": 3}}),
})


class ScenarioError(ValueError):
    """Malformed or schema-violating scenario document."""


class ScenarioRejected(ValueError):
    """Document is well formed but fails scenario validation."""

    def __init__(self, report):
        super().__init__(str(report))
        self.report = report


# ------------------------------------------------------------ scenarios ---

def _floats(a) -> list:
    return [float(x) for x in np.asarray(a, float).ravel()]


def config_to_dict(cfg: ScenarioConfig) -> dict:
    lp, fp, ep, mp = cfg.leader, cfg.follower, cfg.estimator, cfg.malicious
    disp = None
    if lp.desired_displacements is not None:
        disp = {str(k): _floats(v) for k, v in lp.desired_displacements.items()}
    return {
        "schema_version": SCHEMA_VERSION,
        "name": cfg.name,
        "R": float(cfg.R),
        "E": float(cfg.E),
        "mode": cfg.mode,
        "dt": float(cfg.dt),
        "t_end": float(cfg.t_end),
        "seed": int(cfg.seed),
        "collision_distance": float(cfg.collision_distance),
        "agents": [{"id": int(a.id), "position": _floats(a.position),
                    "velocity": _floats(a.velocity)} for a in cfg.agents],
        "malicious_id": None if cfg.malicious_id is None else int(cfg.malicious_id),
        "malicious": None if mp is None else {
            "k_v": float(mp.k_v), "k_a": float(mp.k_a), "k_r": float(mp.k_r),
            "k_bar": _floats(mp.k_bar)},
        "leader": {
            "kappa_v": float(lp.kappa_v), "kappa_x": float(lp.kappa_x),
            "delta_bar": float(lp.delta_bar),
            "H_bar": None if lp.H_bar is None else float(lp.H_bar),
            "iota": float(lp.iota),
            "orientation": None if lp.orientation is None else float(lp.orientation),
            "desired_displacements": disp},
        "follower": {
            "gamma": float(fp.gamma), "alpha0": float(fp.alpha0), "deadband": float(fp.deadband),
            "edge_gamma": {str(k): float(v) for k, v in fp.edge_gamma.items()},
            "edge_alpha0": {str(k): float(v) for k, v in fp.edge_alpha0.items()}},
        "estimator": {
            "a": float(ep.a),
            "Gamma": [_floats(row) for row in np.asarray(ep.Gamma, float)],
            "k_hat0": _floats(ep.k_hat0)},
    }


def config_from_dict(doc: dict) -> ScenarioConfig:
    try:
        jsonschema.validate(doc, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioError(f"schema violation at {where}: {exc.message}") from None
    try:
        agents = [AgentState(a["id"], a["position"], a["velocity"]) for a in doc["agents"]]
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None
    mp = doc["malicious"]
    lp = dict(doc["leader"])
    if lp["desired_displacements"] is not None:
        lp["desired_displacements"] = {int(k): list(v)
                                       for k, v in lp["desired_displacements"].items()}
    fp = doc["follower"]
    ep = doc["estimator"]
    return ScenarioConfig(
        R=float(doc["R"]), E=float(doc["E"]), agents=agents,
        malicious_id=doc["malicious_id"],
        malicious=None if mp is None else MaliciousParams(
            mp["k_v"], mp["k_a"], mp["k_r"], tuple(float(x) for x in mp["k_bar"])),
        leader=LeaderParams(**lp),
        follower=FollowerParams(fp["gamma"], fp["alpha0"], fp["deadband"],
                                dict(fp["edge_gamma"]), dict(fp["edge_alpha0"])),
        estimator=EstimatorGains(ep["a"], [list(r) for r in ep["Gamma"]],
                                 tuple(float(x) for x in ep["k_hat0"])),
        mode=doc["mode"], dt=float(doc["dt"]), t_end=float(doc["t_end"]),
        seed=int(doc["seed"]), collision_distance=float(doc["collision_distance"]),
        name=doc["name"])


def serialize_scenario(cfg: ScenarioConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True, allow_nan=False) + "\n"


def parse_scenario(path, validate: bool = True) -> ScenarioConfig:
    """Load a scenario file.

    Raises ``OSError`` if unreadable, :class:`ScenarioError` if malformed or
    off-schema and, when ``validate`` is set, :class:`ScenarioRejected` with
    the named violations.
    """
    text = Path(path).read_text(encoding="utf-8")
    if not text.strip():
        raise ScenarioError(f"{path}: empty document")
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    cfg = config_from_dict(doc)
    if validate:
        report = validate_scenario(cfg)
        if not report.ok:
            raise ScenarioRejected(report)
    return cfg


def _reject_constant(name):
    raise ScenarioError(f"non-finite number {name} not allowed")


def bundled_scenario(name: str = "siv_fixture.json") -> Path:
    """Path of a scenario file shipped inside the package."""
    return Path(str(resources.files("flockcontain") / "data" / name))


def write_scenario(cfg: ScenarioConfig, path) -> Path:
    path = Path(path)
    path.write_text(serialize_scenario(cfg), encoding="utf-8")
    return path


# -------------------------------------------------------------- outputs ---

TRAJECTORY = "trajectory.csv"
METRICS = "metrics.csv"
EVENTS = "events.log"
SUMMARY = "summary.json"

METRIC_COLUMNS = ("t", "H", "Upsilon", "min_dist", "vel_spread", "containment_residual",
                  "estimator_residual", "k_hat_v", "k_hat_a", "k_hat_r")


def fmt(x) -> str:
    """12 significant digits, fixed spelling for non-finite values."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if x == 0.0:
        return "0"
    return f"{x:.12g}"


def trajectory_header(m: int) -> list[str]:
    """``t, agent_id, x0..x{m-1}, v0.., u0..``."""
    return (["t", "agent_id"] + [f"x{k}" for k in range(m)] + [f"v{k}" for k in range(m)]
            + [f"u{k}" for k in range(m)])


def _csv_lines(header, rows) -> str:
    return ",".join(header) + "\n" + "".join(",".join(r) + "\n" for r in rows)


def trajectory_text(rec: SimulationRecord) -> str:
    T, N, m = rec.X.shape
    rows = []
    for n in range(T):
        t = fmt(rec.times[n])
        for i in range(N):
            rows.append([t, str(i)] + [fmt(v) for v in rec.X[n, i]]
                        + [fmt(v) for v in rec.V[n, i]] + [fmt(v) for v in rec.U[n, i]])
    return _csv_lines(trajectory_header(m), rows)


def metrics_text(rec: SimulationRecord) -> str:
    ups = rec.upsilon()
    cols = np.column_stack([rec.times, rec.H, ups, rec.min_dist, rec.vel_spread,
                            rec.containment_residual, rec.estimator_residual, rec.k_hat])
    return _csv_lines(METRIC_COLUMNS, ([fmt(v) for v in row] for row in cols))


def _payload_value(v):
    if isinstance(v, float):
        return float(fmt(v))
    return v


def events_text(rec: SimulationRecord) -> str:
    lines = []
    for e in rec.events:
        payload = json.dumps({k: _payload_value(v) for k, v in e.payload.items()},
                             sort_keys=True)
        lines.append(f"{fmt(e.t)}\t{e.kind}\t{payload}\n")
    return "".join(lines)


def _clean(obj):
    """Round floats to 12 significant digits; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        s = fmt(obj)
        return float(s) if math.isfinite(float(obj)) else s
    return obj


def summary_text(rec: SimulationRecord, tol_u: float = 0.05, tol_d: float = 0.5) -> str:
    return json.dumps(_clean(summarize(rec, tol_u, tol_d)), indent=2, sort_keys=True) + "\n"


def write_outputs(rec: SimulationRecord, out_dir, tol_u: float = 0.05,
                  tol_d: float = 0.5) -> dict:
    """Write the four result files; returns {name: path}."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    texts = {TRAJECTORY: trajectory_text(rec), METRICS: metrics_text(rec),
             EVENTS: events_text(rec), SUMMARY: summary_text(rec, tol_u, tol_d)}
    paths = {}
    for name, text in texts.items():
        p = out / name
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        paths[name] = p
    return paths
