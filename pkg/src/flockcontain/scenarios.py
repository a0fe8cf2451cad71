"""Scenario builders: the 13-agent experiment, randomised admissible swarms,
an all-normal baseline, and the two negative controls."""
from __future__ import annotations

import math

import numpy as np

from .core import (CONVENTIONAL, HIERARCHICAL, AgentState, EstimatorGains, FollowerParams,
                   LeaderParams, MaliciousParams, ScenarioConfig)
from .potentials import compute_bar_Q

R_EXPERIMENT = 18.0 * math.sqrt(2.0)
# k_r is five orders above k_v, so the adaptation gain is scaled per component;
# a uniform gain lets k_v wander far enough to keep agent 6 off balance.
EXPERIMENT_GAMMA = np.diag([1e-6, 1e-6, 1e5])
RANDOM_GAMMA = np.diag([1e-3, 1e-3, 10.0])

# Layout of the 13-agent experiment: agent 6 at the origin, leaders 2, 5, 7, 10
# roughly 12 m away, and two followers on an outward arm behind each leader.
# Followers start well outside R of agent 6 so no new edge forms in transit.
_LEADER_BEARINGS = {2: 10.0, 5: 100.0, 7: 190.0, 10: 280.0}
_LEADER_RADII = {2: 11.2, 5: 12.6, 7: 12.3, 10: 11.7}
_ARMS = {2: (0, 1), 5: (3, 4), 7: (8, 9), 10: (11, 12)}


def _polar(r: float, deg: float) -> np.ndarray:
    a = math.radians(deg)
    return np.array([r * math.cos(a), r * math.sin(a)])


def experiment_positions() -> np.ndarray:
    X = np.zeros((13, 2))
    for j, b in _LEADER_BEARINGS.items():
        X[j] = _polar(_LEADER_RADII[j], b)
        inner, outer = _ARMS[j]
        X[inner] = _polar(_LEADER_RADII[j] + 22.5, b + 3.0)
        X[outer] = _polar(_LEADER_RADII[j] + 43.0, b - 2.0)
    return X


def experiment_velocities(n: int, rng: np.random.Generator) -> np.ndarray:
    """Ground speeds in (27, 35) m/s at headings in (pi/6, pi/4), level flight."""
    speed = rng.uniform(27.0, 35.0, n)
    heading = rng.uniform(math.pi / 6, math.pi / 4, n)
    return np.stack([speed * np.cos(heading), speed * np.sin(heading)], axis=1)


def _ceiling(q_bar: float) -> float:
    """Round 2*Q_bar up to two significant figures."""
    x = 2.0 * q_bar
    mag = 10 ** math.floor(math.log10(x))
    return math.ceil(x / mag * 10) * mag / 10


def experiment_scenario(seed: int = 7, dt: float = 1e-3, t_end: float = 20.0) -> ScenarioConfig:
    rng = np.random.default_rng(seed)
    X = experiment_positions()
    V = experiment_velocities(13, rng)
    E = _ceiling(compute_bar_Q(X, V, R_EXPERIMENT))
    agents = [AgentState(i, X[i], V[i]) for i in range(13)]
    return ScenarioConfig(
        R=R_EXPERIMENT, E=E, agents=agents, malicious_id=6,
        malicious=MaliciousParams(k_v=0.8, k_a=0.0, k_r=450000.0, k_bar=(10.0, 10.0, 1e6)),
        leader=LeaderParams(kappa_v=6.0, kappa_x=2.0, delta_bar=12.0),
        follower=FollowerParams(gamma=1.0, alpha0=0.0, deadband=1e-3),
        estimator=EstimatorGains(Gamma=EXPERIMENT_GAMMA.tolist()),
        mode=HIERARCHICAL, dt=dt, t_end=t_end, seed=seed, name="experiment-13")


def random_admissible(seed: int, n_followers: int = 2, dt: float = 1e-3,
                      t_end: float = 1.0, k_scale: str = "moderate") -> ScenarioConfig:
    """Random swarm that passes validation.

    The malicious agent sits at the origin with 2..6 neighbours scattered
    around the target polygon, inside a disc of radius R/2 so they are
    mutually adjacent; followers extend outward
    from the first leader along a chain spaced near the potential minimum.
    Samples with any pair distance within ``3 m`` of R are redrawn, since an
    edge forming or breaking at t=0+ is a discontinuity no fixed step resolves.
    """
    rng = np.random.default_rng(seed)
    R = R_EXPERIMENT
    delta_bar = float(rng.uniform(10.0, 11.5))
    while True:
        s = int(rng.integers(2, 7))
        bearings = (rng.uniform(0, 2 * math.pi) + 2 * math.pi * np.arange(s) / s
                    + rng.uniform(-0.15, 0.15, s))
        radii = delta_bar + rng.uniform(-0.75, 0.75, s)
        X = [np.zeros(2)] + [r * np.array([math.cos(b), math.sin(b)])
                             for r, b in zip(radii, bearings)]
        out = X[1] / np.linalg.norm(X[1])
        for q in range(n_followers):
            X.append(X[1] + out * (19.0 + 18.0 * q) + rng.normal(0, 0.5, 2))
        X = np.array(X)
        d = np.linalg.norm(X[:, None] - X[None], axis=-1)
        if np.any(np.abs(d - R) < 3.0):
            continue
        nbrs = np.nonzero((d[0] > 0) & (d[0] < R))[0]
        if len(nbrs) != s:
            continue
        break
    V = np.array([25.0, 20.0]) + rng.normal(0, 0.5, (len(X), 2))
    if k_scale == "moderate":
        k = (rng.uniform(0.0, 1.0), rng.uniform(0.0, 2.0), rng.uniform(0.0, 100.0))
    else:
        k = (rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-1e6, 1e6))
    E = _ceiling(compute_bar_Q(X, V, R))
    agents = [AgentState(i, X[i], V[i]) for i in range(len(X))]
    return ScenarioConfig(
        R=R, E=E, agents=agents, malicious_id=0,
        malicious=MaliciousParams(*k, k_bar=(10.0, 10.0, 1e6)),
        leader=LeaderParams(kappa_v=6.0, kappa_x=2.0, delta_bar=delta_bar),
        estimator=EstimatorGains(Gamma=RANDOM_GAMMA.tolist()),
        mode=HIERARCHICAL, dt=dt, t_end=t_end, seed=seed, name=f"random-{seed}")


def hexagon_positions(spacing: float) -> np.ndarray:
    pts = [np.zeros(2)] + [_polar(spacing, 60.0 * k) for k in range(6)]
    return np.array(pts)


def all_normal_scenario(seed: int = 3, t_end: float = 30.0, dt: float = 1e-3,
                        R: float = 8.0) -> ScenarioConfig:
    """Seven normal agents on a hexagonal patch at the potential minimum spacing.

    The potential's curvature at its minimum is 64/R^2, so the slowest shape
    mode relaxes roughly like 1/R^2; a tight patch (R = 8 m) settles well
    inside 30 s where the 25 m experiment radius would need minutes.
    """
    rng = np.random.default_rng(seed)
    X = hexagon_positions(R / math.sqrt(2.0)) + rng.normal(0, 0.2, (7, 2))
    V = np.array([30.0, 20.0]) + rng.normal(0, 1.0, (7, 2))
    E = _ceiling(compute_bar_Q(X, V, R))
    agents = [AgentState(i, X[i], V[i]) for i in range(7)]
    return ScenarioConfig(R=R, E=E, agents=agents, mode=CONVENTIONAL, dt=dt, t_end=t_end,
                          seed=seed, name="all-normal")


def single_neighbour_scenario(t_end: float = 2.0, dt: float = 1e-3) -> ScenarioConfig:
    """Malicious agent with one neighbour and pure repulsion (violates s >= 2)."""
    R = R_EXPERIMENT
    X = np.array([[0.0, 0.0], [15.0, 0.0], [30.0, 2.0], [45.0, -1.0]])
    V = np.array([[30.0, 20.0], [30.5, 19.5], [29.5, 20.2], [30.2, 20.1]])
    E = _ceiling(compute_bar_Q(X, V, R))
    agents = [AgentState(i, X[i], V[i]) for i in range(4)]
    return ScenarioConfig(
        R=R, E=E, agents=agents, malicious_id=0,
        malicious=MaliciousParams(k_v=0.0, k_a=0.0, k_r=450000.0, k_bar=(10.0, 10.0, 1e6)),
        mode=CONVENTIONAL, dt=dt, t_end=t_end, name="single-neighbour")


def conventional_experiment(seed: int = 7, t_end: float = 20.0, dt: float = 1e-3) -> ScenarioConfig:
    """The 13-agent experiment with every normal agent on the conventional law."""
    cfg = experiment_scenario(seed, dt=dt, t_end=t_end)
    cfg.mode = CONVENTIONAL
    cfg.name = "experiment-13-conventional"
    return cfg
