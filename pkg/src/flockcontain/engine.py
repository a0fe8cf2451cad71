"""Fixed-step integration of the full swarm state plus the monitors computed
along the way (energies, containment, graph events)."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .controllers import (LeaderShape, PairCache, follower_rows, leader_rows,
                          normal_rows, regressor_from)
from .core import (CONVENTIONAL, HIERARCHICAL, ScenarioConfig, leader_offsets,
                   polygon_displacements, validate_scenario)
from .estimator import EstimatorState, estimate_derivative
from .potentials import BoundedPotential, SingularDistance, compute_bar_H
from .topology import (LayerPartition, adjacency_matrix, build_graph, follower_sets,
                       layer_partition, leader_follower_matrix, leader_sets)

log = logging.getLogger(__name__)

EDGE_ADDED = "edge_added"
EDGE_LOST = "edge_lost"
COLLISION = "collision"
ESCAPE = "escape"


class ScenarioInvalid(ValueError):
    def __init__(self, report):
        super().__init__(str(report))
        self.report = report


class NumericalAbort(RuntimeError):
    """Non-finite state or singular pair distance; ``record`` holds the history
    up to the last good state."""

    def __init__(self, message: str, record: "SimulationRecord" = None):
        super().__init__(message)
        self.record = record


@dataclass
class Event:
    t: float
    kind: str
    payload: dict


# ---------------------------------------------------------------- plan -----

@dataclass
class Plan:
    """Everything fixed at t=0: roles, target shape, gain matrices."""

    cfg: ScenarioConfig
    pot: BoundedPotential
    partition: Optional[LayerPartition]
    leaders: np.ndarray
    followers: np.ndarray
    normals: np.ndarray          # agents running the conventional law
    shape: Optional[LeaderShape]
    offsets: dict
    H_bar: float
    gamma: np.ndarray            # (N, N)
    alpha0: np.ndarray           # (N, N)
    Gamma: np.ndarray
    Gamma_inv: np.ndarray
    k_true: np.ndarray
    lam_min0: dict               # leader -> lambda_min(R_j(0))
    F0: dict                     # leader -> F(j) at t=0

    @property
    def N(self):
        return self.cfg.N

    @property
    def m(self):
        return self.cfg.m

    @property
    def f(self):
        return self.cfg.malicious_id


def _edge_matrix(n: int, default: float, overrides: dict) -> np.ndarray:
    M = np.full((n, n), float(default))
    for key, val in (overrides or {}).items():
        i, j = (int(s) for s in str(key).split("-"))
        M[i, j] = M[j, i] = float(val)
    return M


def make_plan(cfg: ScenarioConfig) -> Plan:
    pot = BoundedPotential(cfg.R, cfg.E)
    N = cfg.N
    X0, V0 = cfg.positions(), cfg.velocities()
    A0 = adjacency_matrix(X0, cfg.R)
    Gamma = np.asarray(cfg.estimator.Gamma, float)
    k_true = cfg.malicious.k if cfg.malicious is not None else np.zeros(3)
    gamma = _edge_matrix(N, cfg.follower.gamma, cfg.follower.edge_gamma)
    alpha0 = _edge_matrix(N, cfg.follower.alpha0, cfg.follower.edge_alpha0)

    partition = None
    leaders = np.array([], int)
    followers = np.array([], int)
    normals = np.array([i for i in range(N) if i != cfg.malicious_id], int)
    shape, offsets, H_bar = None, {}, float("nan")
    lam0, F0 = {}, {}
    if cfg.has_malicious:
        partition = layer_partition(build_graph(X0, cfg.R), cfg.malicious_id)
    if cfg.mode == HIERARCHICAL and partition is not None:
        leaders = np.array(sorted(partition.leaders), int)
        followers = np.array(sorted(partition.followers), int)
        normals = np.array([], int)
        lp = cfg.leader
        disp = lp.desired_displacements
        if disp is None:
            disp = polygon_displacements(X0, cfg.malicious_id, leaders, lp.delta_bar,
                                         lp.orientation)
        offsets = leader_offsets(disp)
        H_bar = lp.H_bar
        if H_bar is None:
            H_bar = compute_bar_H(X0, V0, cfg.malicious_id, offsets, A0, cfg.R, lp.kappa_x,
                                  Gamma, cfg.malicious.k_bar, cfg.estimator.k_hat0)
        shape = LeaderShape.from_offsets(cfg.malicious_id, offsets, cfg.R, H_bar, lp.iota)
        F0 = follower_sets(A0, leaders, followers)
        lam0 = {j: leader_follower_matrix(A0, j, fs).lam_min for j, fs in F0.items()}
    return Plan(cfg, pot, partition, leaders, followers, normals, shape, offsets, float(H_bar),
                gamma, alpha0, Gamma, np.linalg.inv(Gamma), k_true, lam0, F0)


# ------------------------------------------------------------ state -------

class Layout:
    """Slices of the flat state vector: X, V, vF, CF, k_hat, alpha."""

    def __init__(self, N: int, m: int):
        self.N, self.m = N, m
        sizes = [N * m, N * m, m, 3 * m, 3, N * N]
        edges = np.cumsum([0] + sizes)
        self.X, self.V, self.vF, self.CF, self.k, self.alpha = (
            slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]))
        self.size = int(edges[-1])

    def pack(self, X, V, vF, CF, k_hat, alpha) -> np.ndarray:
        y = np.empty(self.size)
        y[self.X] = np.ravel(X)
        y[self.V] = np.ravel(V)
        y[self.vF] = vF
        y[self.CF] = np.ravel(CF)
        y[self.k] = k_hat
        y[self.alpha] = np.ravel(alpha)
        return y

    def X_of(self, y):
        return y[self.X].reshape(self.N, self.m)

    def V_of(self, y):
        return y[self.V].reshape(self.N, self.m)

    def CF_of(self, y):
        return y[self.CF].reshape(self.m, 3)

    def alpha_of(self, y):
        return y[self.alpha].reshape(self.N, self.N)


# ------------------------------------------------------------ monitors ----

def energy_H(pc: PairCache, plan: Plan, k_hat) -> float:
    """Group energy: shape potentials, relative kinetic energy, estimate error.

    The true gains enter only here, for monitoring.
    """
    if plan.shape is None:
        return float("nan")
    lp = plan.cfg.leader
    _, val, _ = plan.shape.pair_terms(pc, with_grad=False)
    pot_term = lp.kappa_x * val[1:, 0].sum() + 0.5 * lp.kappa_x * val[1:, 1:].sum()
    rel = pc.V[plan.leaders] - pc.V[plan.f]
    kt = plan.k_true - np.asarray(k_hat, float)
    return float(pot_term + 0.5 * np.sum(rel * rel) + 0.5 * kt @ plan.Gamma_inv @ kt)


def upsilon_parts(pc: PairCache, plan: Plan, alpha) -> tuple[float, float, float, float, float]:
    """Pieces of the whole-swarm energy that do not depend on alpha_bar.

    Returns ``(P, K, S0, S1, S2)`` so that
    ``Upsilon = H + P + K + S2 - 2 alpha_bar S1 + alpha_bar**2 S0``.
    Pair potentials are shifted by their minimum so the ideal flock has zero
    energy.
    """
    if plan.shape is None or len(plan.followers) == 0:
        return 0.0, 0.0, 0.0, 0.0, 0.0
    A = pc.A
    pot = plan.pot
    vmin = 2.0 * pot.E / (pot.E + 2.0)
    Ls = leader_sets(follower_sets(A, plan.leaders, plan.followers))
    fset = set(plan.followers.tolist())
    P = K = S0 = S1 = S2 = 0.0
    for i in plan.followers:
        L = Ls.get(int(i), [])
        sL = len(L)
        for j in L:
            dvij = pc.V[i] - pc.V[j]
            K += 0.5 * float(dvij @ dvij)
        for j in np.nonzero(A[i])[0]:
            j = int(j)
            dval = float(pot.value(math.sqrt(pc.d2[i, j]))) - vmin
            if j in fset:
                w = sL / (4.0 * plan.gamma[i, j])
                P += 0.5 * sL * dval
            elif j in plan.shape.members[1:]:
                if j in L:
                    P += dval
                w = 1.0 / (2.0 * plan.gamma[i, j])
            else:
                continue
            a = alpha[i, j]
            S0 += w
            S1 += w * a
            S2 += w * a * a
    return P, K, S0, S1, S2


def energy_upsilon(pc: PairCache, plan: Plan, k_hat, alpha, alpha_bar: float) -> float:
    """Whole-swarm energy for one state at a given gain level ``alpha_bar``."""
    P, K, S0, S1, S2 = upsilon_parts(pc, plan, alpha)
    H = energy_H(pc, plan, k_hat)
    return float(H + P + K + S2 - 2.0 * alpha_bar * S1 + alpha_bar**2 * S0)


def alpha_bound_diagnostic(mu_bar: float, lam_mins) -> float:
    """Smallest adaptive gain level the Lyapunov argument asks for."""
    lam = np.asarray(list(lam_mins), float)
    if lam.size == 0:
        raise ValueError("no leader-follower structure")
    if mu_bar == 0:
        return 0.0
    return float(mu_bar / np.sqrt(lam.min()))


@dataclass
class ContainmentReport:
    contained: bool
    u_residual: float
    distance_errors: dict
    tol_u: float
    tol_d: float


def containment_check(u_if, X, malicious_id: int, neighbours, delta_bar: float,
                      tol_u: float = 0.05, tol_d: float = 0.5) -> ContainmentReport:
    X = np.asarray(X, float)
    u_res = float(np.linalg.norm(u_if))
    errs = {int(j): float(np.linalg.norm(X[malicious_id] - X[j]) - delta_bar)
            for j in neighbours}
    ok = u_res <= tol_u and all(abs(e) <= tol_d for e in errs.values())
    return ContainmentReport(bool(ok), u_res, errs, tol_u, tol_d)


# ------------------------------------------------------------- record -----

@dataclass
class SimulationRecord:
    times: np.ndarray
    X: np.ndarray            # (T, N, m)
    V: np.ndarray
    U: np.ndarray
    H: np.ndarray
    ups_parts: np.ndarray    # (T, 5): P, K, S0, S1, S2
    min_dist: np.ndarray
    vel_spread: np.ndarray
    containment_residual: np.ndarray
    distance_errors: np.ndarray   # (T, s) against leaders in plan order
    estimator_residual: np.ndarray
    filter_defect: np.ndarray     # |v_f - vF + CF k| with the true k (monitor only)
    k_hat: np.ndarray        # (T, 3)
    alpha_max: np.ndarray
    leader_u1: np.ndarray    # max over leaders of |u_j|_1
    events: list
    plan: Plan = field(repr=False)
    alpha_bar: Optional[float] = None
    aborted: Optional[str] = None

    @property
    def n(self) -> int:
        return len(self.times)

    def upsilon(self, alpha_bar: Optional[float] = None) -> np.ndarray:
        ab = self.alpha_bar if alpha_bar is None else alpha_bar
        if ab is None:
            ab = 0.0
        P, K, S0, S1, S2 = self.ups_parts.T
        return self.H + P + K + S2 - 2.0 * ab * S1 + ab * ab * S0

    def events_of(self, kind: str) -> list:
        return [e for e in self.events if e.kind == kind]

    def mu(self) -> float:
        return float(np.max(self.leader_u1)) if self.leader_u1.size else 0.0

    def alpha_required(self) -> Optional[float]:
        if not self.plan.lam_min0:
            return None
        s_max = max(len(fs) for fs in self.plan.F0.values())
        return alpha_bound_diagnostic(self.mu() * math.sqrt(s_max), self.plan.lam_min0.values())

    def truncated(self, n: int) -> "SimulationRecord":
        kw = {}
        for name in ("times", "X", "V", "U", "H", "ups_parts", "min_dist", "vel_spread",
                     "containment_residual", "distance_errors", "estimator_residual",
                     "filter_defect", "k_hat", "alpha_max", "leader_u1"):
            kw[name] = getattr(self, name)[:n]
        return SimulationRecord(events=self.events, plan=self.plan, alpha_bar=self.alpha_bar,
                                aborted=self.aborted, **kw)


# ---------------------------------------------------------- simulator ----

class Simulator:
    """Fixed-step classical RK4 over the full coupled state."""

    def __init__(self, plan: Plan):
        self.plan = plan
        self.layout = Layout(plan.N, plan.m)
        cfg = plan.cfg
        self.R = cfg.R
        self.deadband = cfg.follower.deadband
        self.est_on = cfg.has_malicious
        self.a = cfg.estimator.a

    def initial_state(self) -> np.ndarray:
        p, cfg = self.plan, self.plan.cfg
        X0, V0 = cfg.positions(), cfg.velocities()
        vF0 = V0[p.f] if cfg.has_malicious else np.zeros(p.m)
        k0 = np.asarray(cfg.estimator.k_hat0, float)
        return self.layout.pack(X0, V0, vF0, np.zeros((p.m, 3)), k0, p.alpha0)

    def rhs(self, y: np.ndarray):
        """Return (dy/dt, controls, pair cache, regressor)."""
        p, L = self.plan, self.layout
        X, V = L.X_of(y), L.V_of(y)
        pc = PairCache.build(X, V, self.R)
        U = np.zeros_like(X)
        dy = np.zeros_like(y)
        C = None
        if len(p.normals):
            U[p.normals] = normal_rows(pc, p.pot)[p.normals]
        if self.est_on:
            f = p.f
            C = regressor_from(pc, p.pot, f)
            U[f] = -C @ p.k_true
            k_hat = y[L.k]
            vF, CF = y[L.vF], L.CF_of(y)
            dy[L.vF] = -self.a * vF + self.a * V[f]
            dy[L.CF] = (-self.a * CF + C).ravel()
            s = -pc.alignment()[f]   # sum_j (v_j - v_f)
            resid = CF @ k_hat + V[f] - vF
            dy[L.k] = p.Gamma @ (C.T @ s) - p.Gamma @ (CF.T @ resid)
            if p.shape is not None:
                cfg = p.cfg
                U[p.leaders] = leader_rows(pc, p.shape, cfg.leader.kappa_v, cfg.leader.kappa_x,
                                           C, k_hat)
        if len(p.followers):
            uf, adot = follower_rows(pc, p.pot, p.followers, L.alpha_of(y), p.gamma,
                                     self.deadband)
            U[p.followers] = uf
            dy[L.alpha] = adot.ravel()
        dy[L.X] = V.ravel()
        dy[L.V] = U.ravel()
        return dy, U, pc, C

    def step(self, y: np.ndarray, dt: float, k1=None) -> np.ndarray:
        if not dt > 0:
            raise ValueError("dt must be positive")
        if k1 is None:
            k1 = self.rhs(y)[0]
        k2 = self.rhs(y + 0.5 * dt * k1)[0]
        k3 = self.rhs(y + 0.5 * dt * k2)[0]
        k4 = self.rhs(y + dt * k3)[0]
        return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step(plan: Plan, y: np.ndarray, dt: float) -> np.ndarray:
    """One integrator step of the coupled system."""
    return Simulator(plan).step(y, dt)


def _classify(plan: Plan, i: int, j: int) -> str:
    grp = set(plan.shape.members.tolist()) if plan.shape is not None else set()
    fol = set(plan.followers.tolist())
    if i in grp and j in grp:
        return "group"
    if (i in fol and j in fol) or (i in fol and j in grp - {plan.f}) or \
            (j in fol and i in grp - {plan.f}):
        return "follower"
    return "other"


def run(cfg: ScenarioConfig, force: bool = False, alpha_bar: Optional[float] = None,
        tol_u: float = 0.05, tol_d: float = 0.5) -> SimulationRecord:
    report = validate_scenario(cfg)
    if not report.ok and not force:
        raise ScenarioInvalid(report)
    plan = make_plan(cfg)
    sim = Simulator(plan)
    L = sim.layout
    N, m = plan.N, plan.m
    dt = cfg.dt
    n_steps = max(1, int(math.ceil(cfg.t_end / dt - 1e-9)))
    T = n_steps + 1
    times = np.minimum(np.arange(T) * dt, cfg.t_end)
    times[-1] = cfg.t_end

    s = len(plan.leaders)
    rec = SimulationRecord(
        times=times, X=np.zeros((T, N, m)), V=np.zeros((T, N, m)), U=np.zeros((T, N, m)),
        H=np.full(T, np.nan), ups_parts=np.zeros((T, 5)), min_dist=np.zeros(T),
        vel_spread=np.zeros(T), containment_residual=np.full(T, np.nan),
        distance_errors=np.full((T, s), np.nan), estimator_residual=np.full(T, np.nan),
        filter_defect=np.full(T, np.nan),
        k_hat=np.full((T, 3), np.nan), alpha_max=np.zeros(T), leader_u1=np.zeros(T),
        events=[], plan=plan)

    fol_mask = np.zeros(N, bool)
    fol_mask[plan.followers] = True
    iu = np.triu_indices(N, 1)
    initial_nbrs = set(plan.partition.leaders) if plan.partition is not None else set()

    def observe(n: int, y: np.ndarray, k1_out):
        dy, U, pc, _ = k1_out
        X, V = L.X_of(y), L.V_of(y)
        rec.X[n], rec.V[n], rec.U[n] = X, V, U
        d = np.sqrt(pc.d2[iu])
        rec.min_dist[n] = d.min() if d.size else np.inf
        dvn = np.sqrt(np.einsum("ijk,ijk->ij", pc.dv, pc.dv))
        rec.vel_spread[n] = dvn.max()
        alpha = L.alpha_of(y)
        rec.alpha_max[n] = alpha[fol_mask].max() if fol_mask.any() else 0.0
        if cfg.has_malicious:
            f = plan.f
            k_hat = y[L.k]
            rec.k_hat[n] = k_hat
            rec.containment_residual[n] = np.linalg.norm(U[f])
            CF, vF = L.CF_of(y), y[L.vF]
            rec.estimator_residual[n] = np.linalg.norm(CF @ k_hat + V[f] - vF)
            rec.filter_defect[n] = np.linalg.norm(V[f] - vF + CF @ plan.k_true)
            if s:
                rec.distance_errors[n] = np.linalg.norm(X[plan.leaders] - X[f], axis=1) \
                    - cfg.leader.delta_bar
                rec.leader_u1[n] = np.abs(U[plan.leaders]).sum(axis=1).max()
            if plan.shape is not None:
                rec.H[n] = energy_H(pc, plan, k_hat)
                rec.ups_parts[n] = upsilon_parts(pc, plan, alpha)
        return pc.A

    def check_collisions(t, pc, colliding):
        """Log pairs that newly came within the collision distance."""
        close = np.argwhere(np.triu(pc.d2 < cfg.collision_distance**2, 1))
        now = set()
        for i, j in close:
            pair = (int(i), int(j))
            now.add(pair)
            if pair not in colliding:
                rec.events.append(Event(t, COLLISION, {
                    "i": pair[0], "j": pair[1], "distance": float(math.sqrt(pc.d2[pair]))}))
        return now

    def abort(msg, n):
        rec_t = rec.truncated(n)
        rec_t.aborted = msg
        return NumericalAbort(msg, rec_t)

    y = sim.initial_state()
    try:
        k1 = sim.rhs(y)
    except SingularDistance as exc:
        raise abort(str(exc), 0) from exc
    A_prev = observe(0, y, k1)
    colliding = check_collisions(float(times[0]), k1[2], set())
    for n in range(1, T):
        h = times[n] - times[n - 1]
        try:
            y_new = sim.step(y, h, k1[0])
            if not np.all(np.isfinite(y_new)):
                raise abort(f"non-finite state at t={times[n]:.6g}", n)
            k1 = sim.rhs(y_new)
        except SingularDistance as exc:
            raise abort(f"{exc} at t={times[n]:.6g}", n) from exc
        y = y_new
        A = observe(n, y, k1)
        t = float(times[n])
        if not np.array_equal(A, A_prev):
            changed = np.argwhere(np.triu(A != A_prev, 1))
            for i, j in changed:
                i, j = int(i), int(j)
                kind = EDGE_ADDED if A[i, j] else EDGE_LOST
                rec.events.append(Event(t, kind, {"i": i, "j": j,
                                                  "scope": _classify(plan, i, j)}))
                if kind == EDGE_LOST and plan.f is not None and plan.f in (i, j):
                    other = j if i == plan.f else i
                    if other in initial_nbrs:
                        rec.events.append(Event(t, ESCAPE, {"i": plan.f, "j": other}))
            A_prev = A
        colliding = check_collisions(t, k1[2], colliding)

    if alpha_bar is None and plan.lam_min0:
        alpha_bar = rec.alpha_required()
    rec.alpha_bar = alpha_bar
    return rec


def final_containment(rec: SimulationRecord, tol_u: float = 0.05,
                      tol_d: float = 0.5) -> Optional[ContainmentReport]:
    plan = rec.plan
    if plan.f is None or plan.partition is None:
        return None
    return containment_check(rec.U[-1, plan.f], rec.X[-1], plan.f, sorted(plan.partition.leaders),
                             plan.cfg.leader.delta_bar, tol_u, tol_d)


def summarize(rec: SimulationRecord, tol_u: float = 0.05, tol_d: float = 0.5) -> dict:
    """Verdicts on the flocking objectives at the end of the run."""
    plan = rec.plan
    spread0, spread1 = float(rec.vel_spread[0]), float(rec.vel_spread[-1])
    lost = rec.events_of(EDGE_LOST)
    out = {
        "scenario": plan.cfg.name,
        "t_end": float(rec.times[-1]),
        "steps": int(rec.n - 1),
        "aborted": rec.aborted,
        "velocity_spread_initial": spread0,
        "velocity_spread_final": spread1,
        "velocity_consensus": bool(spread1 < 0.01 * spread0) if spread0 > 0 else True,
        "min_pairwise_distance": float(np.min(rec.min_dist)),
        "collision_events": len(rec.events_of(COLLISION)),
        "no_collision": bool(np.min(rec.min_dist) > 0 and not rec.events_of(COLLISION)),
        "edge_lost_group": sum(1 for e in lost if e.payload["scope"] == "group"),
        "edge_lost_follower": sum(1 for e in lost if e.payload["scope"] == "follower"),
        "edge_added": len(rec.events_of(EDGE_ADDED)),
        "escape_events": len(rec.events_of(ESCAPE)),
    }
    cont = final_containment(rec, tol_u, tol_d)
    if cont is not None:
        out["containment"] = {
            "contained": cont.contained,
            "u_residual": cont.u_residual,
            "distance_errors": {str(k): v for k, v in cont.distance_errors.items()},
            "tol_u": tol_u,
            "tol_d": tol_d,
        }
        out["contained"] = cont.contained
        out["k_hat_final"] = rec.k_hat[-1].tolist()
        out["estimator_residual_final"] = float(rec.estimator_residual[-1])
    if plan.shape is not None:
        H = rec.H
        out["H_initial"] = float(H[0])
        out["H_bar"] = plan.H_bar
        out["H_max_increase"] = float(np.max(np.diff(H))) if rec.n > 1 else 0.0
        ups = rec.upsilon()
        out["upsilon_max_increase"] = float(np.max(np.diff(ups))) if rec.n > 1 else 0.0
    ar = rec.alpha_required()
    if ar is not None:
        out["alpha_required"] = ar
        out["alpha_bar"] = rec.alpha_bar
        out["alpha_max_achieved"] = float(np.max(rec.alpha_max))
        out["lambda_min_R_j0"] = {str(k): v for k, v in plan.lam_min0.items()}
    return out
