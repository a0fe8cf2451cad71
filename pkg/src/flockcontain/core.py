"""Domain types and scenario validation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .potentials import compute_bar_Q
from .topology import adjacency_matrix, build_graph, is_connected

HIERARCHICAL = "hierarchical"
CONVENTIONAL = "conventional"
MODES = (HIERARCHICAL, CONVENTIONAL)


@dataclass
class AgentState:
    id: int
    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        if self.position.shape != self.velocity.shape or self.position.ndim != 1:
            raise ValueError(f"agent {self.id}: position/velocity shape mismatch")
        if not (np.all(np.isfinite(self.position)) and np.all(np.isfinite(self.velocity))):
            raise ValueError(f"agent {self.id}: non-finite state")


def relative_position(a: AgentState, b: AgentState) -> np.ndarray:
    """x_ij = x_i - x_j."""
    if a.position.shape != b.position.shape:
        raise ValueError("dimension mismatch")
    return a.position - b.position


@dataclass
class MaliciousParams:
    k_v: float
    k_a: float
    k_r: float
    k_bar: tuple = (10.0, 10.0, 1e6)

    @property
    def k(self) -> np.ndarray:
        return np.array([self.k_v, self.k_a, self.k_r], dtype=float)


@dataclass
class LeaderParams:
    """Gains and target shape for the malicious agent's neighbours.

    ``desired_displacements`` maps leader id to x*_{i_f j} = x_{i_f} - x_j at
    the target shape. When omitted the regular polygon of radius
    ``delta_bar`` is used. ``H_bar`` is computed from t=0 when omitted.
    """

    kappa_v: float = 6.0
    kappa_x: float = 2.0
    delta_bar: float = 12.0
    H_bar: Optional[float] = None
    iota: float = 1.0
    orientation: Optional[float] = None
    desired_displacements: Optional[dict] = None


@dataclass
class FollowerParams:
    gamma: float = 1.0
    alpha0: float = 0.0
    deadband: float = 1e-3
    edge_gamma: dict = field(default_factory=dict)   # "k-p" -> gamma_kp
    edge_alpha0: dict = field(default_factory=dict)  # "k-p" -> alpha_kp(0)


@dataclass
class EstimatorGains:
    a: float = 10.0
    Gamma: list = field(default_factory=lambda: (10.0 * np.eye(3)).tolist())
    k_hat0: tuple = (1.0, 1.0, 1.0)


@dataclass
class ScenarioConfig:
    R: float
    E: float
    agents: list
    malicious_id: Optional[int] = None
    malicious: Optional[MaliciousParams] = None
    leader: LeaderParams = field(default_factory=LeaderParams)
    follower: FollowerParams = field(default_factory=FollowerParams)
    estimator: EstimatorGains = field(default_factory=EstimatorGains)
    mode: str = HIERARCHICAL
    dt: float = 1e-3
    t_end: float = 20.0
    seed: int = 0
    collision_distance: float = 1e-2
    name: str = "scenario"

    @property
    def N(self) -> int:
        return len(self.agents)

    @property
    def m(self) -> int:
        return len(self.agents[0].position)

    def positions(self) -> np.ndarray:
        return np.array([a.position for a in self.agents], dtype=float)

    def velocities(self) -> np.ndarray:
        return np.array([a.velocity for a in self.agents], dtype=float)

    @property
    def has_malicious(self) -> bool:
        return self.malicious_id is not None


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)  # (name, detail)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.violations]

    def add(self, name: str, detail: str):
        self.violations.append((name, detail))

    def __str__(self):
        if self.ok:
            return "pass"
        return "\n".join(f"{n}: {d}" for n, d in self.violations)


# ---------------------------------------------------------------- polygon ---

def desired_polygon(s: int, delta_bar: float, orientation: float = 0.0, m: int = 2) -> np.ndarray:
    """Vertex offsets (leader minus malicious agent) of a regular s-gon.

    Returns an ``(s, m)`` array; vertex k sits at bearing
    ``orientation + 2 pi k / s`` and distance ``delta_bar``.
    """
    if s < 2:
        raise ValueError("a containment polygon needs s >= 2 neighbours")
    if m < 2:
        raise ValueError("dimension must be at least 2")
    ang = orientation + 2.0 * np.pi * np.arange(s) / s
    out = np.zeros((s, m))
    out[:, 0] = delta_bar * np.cos(ang)
    out[:, 1] = delta_bar * np.sin(ang)
    return out


def polygon_displacements(positions, malicious_id: int, leaders, delta_bar: float,
                          orientation: Optional[float] = None) -> dict:
    """Assign polygon vertices to leaders; returns {j: x*_{i_f j}}.

    Leaders sorted by id take vertices in counter-clockwise order starting at
    ``orientation``, which defaults to the bearing of the lowest-id leader.
    """
    x = np.asarray(positions, float)
    leaders = sorted(leaders)
    if orientation is None:
        rel = x[leaders[0]] - x[malicious_id]
        orientation = math.atan2(rel[1], rel[0])
    verts = desired_polygon(len(leaders), delta_bar, orientation, x.shape[1])
    return {j: -verts[k] for k, j in enumerate(leaders)}


def leader_offsets(displacements: dict) -> dict:
    """Convert {j: x*_{i_f j}} to target offsets {j: x*_{j i_f}}."""
    return {int(j): -np.asarray(v, float) for j, v in displacements.items()}


# ------------------------------------------------------------- validation ---

def validate_scenario(cfg: ScenarioConfig) -> ValidationReport:
    rep = ValidationReport()
    if cfg.N < 1:
        rep.add("structure", "no agents")
        return rep
    ids = [a.id for a in cfg.agents]
    if ids != list(range(cfg.N)):
        rep.add("structure", "agent ids must be 0..N-1 in order")
    if len({len(a.position) for a in cfg.agents}) != 1 or cfg.m < 2:
        rep.add("structure", "all agents need the same dimension m >= 2")
        return rep
    if cfg.mode not in MODES:
        rep.add("structure", f"mode must be one of {MODES}")
    if not 0 < cfg.dt <= cfg.t_end:
        rep.add("dt", "need 0 < dt <= t_end")
    if cfg.R <= 0:
        rep.add("structure", "R must be positive")
        return rep

    x, v = cfg.positions(), cfg.velocities()
    g = build_graph(x, cfg.R)
    try:
        q_bar = compute_bar_Q(x, v, cfg.R)
    except ValueError as exc:
        rep.add("E > Q̄", str(exc))
    else:
        if not cfg.E > q_bar:
            rep.add("E > Q̄", f"E={cfg.E:g} must exceed Q̄={q_bar:g}")

    if not cfg.has_malicious:
        if not is_connected(g, range(cfg.N)):
            rep.add("Assumption 2", "initial graph is not connected")
        return rep

    f = cfg.malicious_id
    if not 0 <= f < cfg.N:
        rep.add("structure", f"malicious_id {f} out of range")
        return rep
    if cfg.N < 4:
        rep.add("structure", "N >= 4 required")

    mp = cfg.malicious
    if mp is None:
        rep.add("structure", "malicious parameters missing")
    else:
        kb = np.asarray(mp.k_bar, float)
        if kb.shape != (3,) or np.any(kb <= 0):
            rep.add("Assumption 1", "bounds k_bar must be three positive reals")
        elif np.any(np.abs(mp.k) > kb):
            rep.add("Assumption 1", f"|k|={np.abs(mp.k).tolist()} exceeds k_bar={kb.tolist()}")

    others = [i for i in range(cfg.N) if i != f]
    if others and not is_connected(g, others):
        rep.add("Assumption 2", "graph without the malicious agent is not connected")

    leaders = sorted(g.neighbors(f))
    if len(leaders) < 2:
        rep.add("Assumption 3", f"malicious agent has {len(leaders)} neighbour(s), need >= 2")
    A = adjacency_matrix(x, cfg.R)
    missing = [(i, j) for i in leaders for j in leaders if i < j and not A[i, j]]
    if missing:
        rep.add("Assumption 4", f"neighbours of the malicious agent not mutually adjacent: {missing}")

    lp = cfg.leader
    if cfg.mode == HIERARCHICAL:
        if not 0 < lp.delta_bar < cfg.R / 2:
            rep.add("δ̄ < R/2", f"δ̄={lp.delta_bar:g} must lie in (0, R/2={cfg.R / 2:g})")
        if lp.kappa_v < 1 or lp.kappa_x < 1:
            rep.add("leader gains", "κ_v and κ_x must be >= 1")
        if lp.desired_displacements is not None:
            _check_displacements(rep, lp, leaders, cfg.m)
    return rep


def _check_displacements(rep: ValidationReport, lp: LeaderParams, leaders, m: int):
    disp = {int(k): np.asarray(val, float) for k, val in lp.desired_displacements.items()}
    if sorted(disp) != leaders:
        rep.add("desired displacements", f"keys {sorted(disp)} != neighbours {leaders}")
        return
    arr = np.array([disp[j] for j in leaders]).reshape(len(leaders), m)
    scale = max(1.0, lp.delta_bar)
    if np.linalg.norm(arr.sum(axis=0)) > 1e-9 * scale:
        rep.add("desired displacements", "displacements must sum to zero")
    if np.any(np.abs(np.linalg.norm(arr, axis=1) - lp.delta_bar) > 1e-9 * scale):
        rep.add("desired displacements", "every |x*| must equal δ̄")
