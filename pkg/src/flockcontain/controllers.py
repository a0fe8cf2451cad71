"""Control laws for the four agent roles and the malicious regressor.

Every law is written over a :class:`PairCache`, a snapshot of pairwise
relative positions/velocities and the current adjacency. The single-agent
functions (``u_normal`` and friends) build a cache and pick one row; the
engine builds one cache per right-hand-side evaluation and calls the
``*_rows`` variants directly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import desired_polygon
from .potentials import BoundedPotential, SingularDistance, hat_v_terms
from .topology import adjacency_matrix


@dataclass
class PairCache:
    X: np.ndarray       # (N, m)
    V: np.ndarray       # (N, m)
    diff: np.ndarray    # (N, N, m)  x_i - x_j
    dv: np.ndarray      # (N, N, m)  v_i - v_j
    d2: np.ndarray      # (N, N)
    A: np.ndarray       # (N, N) bool adjacency
    _align: np.ndarray = None
    _grads: tuple = None
    _grads_for: BoundedPotential = None

    @classmethod
    def build(cls, X, V, R: float, A=None) -> "PairCache":
        X = np.asarray(X, float)
        V = np.asarray(V, float)
        diff = X[:, None, :] - X[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        if A is None:
            A = (d2 > 0.0) & (d2 < R * R)
        return cls(X, V, diff, V[:, None, :] - V[None, :, :], d2, np.asarray(A, bool))

    def alignment(self) -> np.ndarray:
        """Row i: sum over neighbours j of (v_i - v_j)."""
        if self._align is None:
            self._align = np.einsum("ij,ijk->ik", self.A, self.dv)
        return self._align

    def grad_sums(self, pot: BoundedPotential) -> tuple[np.ndarray, np.ndarray]:
        """Row i: sums over neighbours of grad V_a and grad V_r w.r.t. x_i."""
        if self._grads is not None and self._grads_for is pot:
            return self._grads
        A = self.A
        if np.any(A & (self.d2 == 0.0)):
            raise SingularDistance("neighbour at zero distance")
        d2 = np.where(A, self.d2, 0.5 * pot.R**2)
        ca = np.where(A, pot.coeff_a(d2), 0.0)
        cr = np.where(A, pot.coeff_r(d2), 0.0)
        self._grads = (np.einsum("ij,ijk->ik", ca, self.diff),
                       np.einsum("ij,ijk->ik", cr, self.diff))
        self._grads_for = pot
        return self._grads


def _cache(states_or_X, V=None, R=None, A=None) -> PairCache:
    if isinstance(states_or_X, PairCache):
        return states_or_X
    return PairCache.build(states_or_X, V, R, A)


def sgn_deadband(z, eps: float) -> np.ndarray:
    """Component-wise sign, zero inside |z| <= eps."""
    z = np.asarray(z, float)
    return np.where(np.abs(z) > eps, np.sign(z), 0.0)


# ------------------------------------------------------------ normal law ---

def normal_rows(pc: PairCache, pot: BoundedPotential) -> np.ndarray:
    ga, gr = pc.grad_sums(pot)
    return -pc.alignment() - ga - gr


def u_normal(i: int, X, V, pot: BoundedPotential, A=None) -> np.ndarray:
    """Conventional flocking law for agent ``i``."""
    return normal_rows(_cache(X, V, pot.R, A), pot)[i]


# --------------------------------------------------------- malicious law ---

def regressor_from(pc: PairCache, pot: BoundedPotential, i_f: int) -> np.ndarray:
    """m x 3 matrix C with u_{i_f} = -C @ (k_v, k_a, k_r)."""
    ga, gr = pc.grad_sums(pot)
    return np.stack([pc.alignment()[i_f], ga[i_f], gr[i_f]], axis=1)


def regressor(i_f: int, X, V, pot: BoundedPotential, A=None) -> np.ndarray:
    return regressor_from(_cache(X, V, pot.R, A), pot, i_f)


def u_malicious(i_f: int, X, V, pot: BoundedPotential, k, A=None) -> np.ndarray:
    """Falsified-gain law; ``k`` is (k_v, k_a, k_r)."""
    pc = _cache(X, V, pot.R, A)
    kv, ka, kr = np.asarray(k, float)
    ga, gr = pc.grad_sums(pot)
    return -kv * pc.alignment()[i_f] - ka * ga[i_f] - kr * gr[i_f]


def balance_residual(s: int, delta_bar: float, k, R: float, E: float,
                     orientation: float = 0.0, velocity=None, m: int = 2) -> float:
    """|u| of a malicious agent at the centre of a regular s-gon of radius
    ``delta_bar`` when every agent shares one velocity.

    Any gains ``k`` give zero up to rounding: the neighbour forces cancel by
    symmetry, so falsified gains alone cannot move a contained agent.
    """
    X = np.zeros((s + 1, m))
    X[1:] = desired_polygon(s, delta_bar, orientation, m)
    V = np.zeros((s + 1, m)) if velocity is None else np.tile(np.asarray(velocity, float), (s + 1, 1))
    pot = BoundedPotential(R, E)
    A = np.zeros((s + 1, s + 1), bool)
    A[0, 1:] = A[1:, 0] = True
    return float(np.linalg.norm(u_malicious(0, X, V, pot, k, A=A)))


# ------------------------------------------------------------ leader law ---

@dataclass
class LeaderShape:
    """Target shape of the malicious agent plus its neighbours.

    ``members`` lists the group (malicious agent first); ``offsets[r]`` is the
    target position of ``members[r]`` relative to the malicious agent, so the
    desired x*_{jp} is ``offsets[r_j] - offsets[r_p]``.
    """

    members: np.ndarray
    offsets: np.ndarray
    R: float
    h: float  # H_bar + iota

    @classmethod
    def from_offsets(cls, malicious_id: int, offsets: dict, R: float, H_bar: float,
                     iota: float = 1.0) -> "LeaderShape":
        leaders = sorted(offsets)
        m = len(next(iter(offsets.values())))
        off = np.zeros((len(leaders) + 1, m))
        for r, j in enumerate(leaders, start=1):
            off[r] = offsets[j]
        return cls(np.array([malicious_id] + leaders), off, R, H_bar + iota)

    @property
    def x_star(self) -> np.ndarray:
        return self.offsets[:, None, :] - self.offsets[None, :, :]

    def pair_terms(self, pc: PairCache, with_grad: bool = True):
        """Shape potential values/gradients over the group, masked by adjacency.

        Returns ``(mask, val, grad)`` with shapes (g, g), (g, g), (g, g, m);
        entry (r, q) is the pair (members[r], members[q]).
        """
        idx = self.members
        mask = pc.A[np.ix_(idx, idx)]
        x = pc.diff[np.ix_(idx, idx)]
        d2 = pc.d2[np.ix_(idx, idx)]
        if np.any(mask & (d2 == 0.0)):
            raise SingularDistance("group members at zero distance")
        # off-graph pairs (and the diagonal) get a harmless placeholder with zero
        # error so the arithmetic stays finite
        fill = np.zeros(x.shape[-1])
        fill[0] = 0.5 * self.R
        xs = np.where(mask[..., None], self.x_star, fill)
        safe = np.where(mask[..., None], x, fill)
        val, grad = hat_v_terms(safe, xs, self.R, self.h, with_grad=with_grad)
        val = np.where(mask, val, 0.0)
        if grad is not None:
            grad = np.where(mask[..., None], grad, 0.0)
        return mask, val, grad


def leader_rows(pc: PairCache, shape: LeaderShape, kappa_v: float, kappa_x: float,
                C: np.ndarray, k_hat) -> np.ndarray:
    """Controls for every leader, ordered as ``shape.members[1:]``."""
    idx = shape.members
    mask, _, grad = shape.pair_terms(pc)
    dv = pc.dv[np.ix_(idx, idx)]
    align = np.einsum("rq,rqk->rk", mask, dv)
    shape_force = grad.sum(axis=1)
    comp = C @ np.asarray(k_hat, float)
    u = -kappa_v * align - kappa_x * shape_force - comp[None, :]
    return u[1:]


def u_leader(j: int, X, V, pot: BoundedPotential, shape: LeaderShape, kappa_v: float,
             kappa_x: float, k_hat, C=None, A=None) -> np.ndarray:
    """Geometric-configuration law for leader ``j``.

    ``C`` defaults to the malicious regressor evaluated on the same snapshot.
    """
    pc = _cache(X, V, pot.R, A)
    i_f = int(shape.members[0])
    if j not in shape.members[1:]:
        raise KeyError(f"no desired displacement for agent {j}")
    if C is None:
        C = regressor_from(pc, pot, i_f)
    rows = leader_rows(pc, shape, kappa_v, kappa_x, C, k_hat)
    return rows[list(shape.members[1:]).index(j)]


# ---------------------------------------------------------- follower law ---

def follower_rows(pc: PairCache, pot: BoundedPotential, followers, alpha, gamma,
                  deadband: float) -> tuple[np.ndarray, np.ndarray]:
    """Adaptive law for the rows in ``followers``.

    ``alpha`` and ``gamma`` are full (N, N) arrays. Returns the (len, m)
    controls and an (N, N) gain derivative that is nonzero only on follower
    rows at current neighbours.
    """
    fo = np.asarray(followers, int)
    A = pc.A[fo]
    dv = pc.dv[fo]
    s = sgn_deadband(dv, deadband)
    sgn_term = np.einsum("ij,ijk->ik", np.where(A, alpha[fo], 0.0), s)
    ga, gr = pc.grad_sums(pot)
    u = -sgn_term - ga[fo] - gr[fo]
    alpha_dot = np.zeros_like(alpha)
    alpha_dot[fo] = np.where(A, gamma[fo] * np.abs(dv).sum(axis=-1), 0.0)
    return u, alpha_dot


def u_follower(k: int, X, V, pot: BoundedPotential, alpha, gamma=1.0,
               deadband: float = 1e-3, A=None) -> tuple[np.ndarray, np.ndarray]:
    """Adaptive sgn law for follower ``k``; returns (u_k, alpha_dot row k)."""
    pc = _cache(X, V, pot.R, A)
    n = pc.X.shape[0]
    alpha = np.broadcast_to(np.asarray(alpha, float), (n, n))
    gamma = np.broadcast_to(np.asarray(gamma, float), (n, n))
    u, ad = follower_rows(pc, pot, [k], alpha, gamma, deadband)
    return u[0], ad[k]


def graph_of(X, R: float) -> np.ndarray:
    return adjacency_matrix(X, R)
