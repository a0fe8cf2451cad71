"""Proximity graphs, the three-layer split around the malicious agent, and
spectral / rigidity diagnostics."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ProximityGraph:
    n: int
    edges: frozenset  # of (i, j) with i < j

    @classmethod
    def from_adjacency(cls, adj) -> "ProximityGraph":
        adj = np.asarray(adj, bool)
        iu, ju = np.nonzero(np.triu(adj, 1))
        return cls(adj.shape[0], frozenset(zip(iu.tolist(), ju.tolist())))

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.edges:
            A[i, j] = A[j, i] = True
        return A

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges

    def neighbors(self, i: int) -> set[int]:
        out = set()
        for a, b in self.edges:
            if a == i:
                out.add(b)
            elif b == i:
                out.add(a)
        return out


@dataclass(frozen=True)
class LayerPartition:
    malicious: int
    leaders: frozenset
    followers: frozenset

    @property
    def group(self) -> frozenset:
        return self.leaders | {self.malicious}


@dataclass
class LeaderFollowerMatrix:
    leader: int
    followers: list[int]
    L: np.ndarray
    Lam: np.ndarray
    R: np.ndarray = field(init=False)
    lam_min: float = field(init=False)

    def __post_init__(self):
        self.R = self.L + self.Lam
        self.lam_min = float(np.linalg.eigvalsh(self.R)[0])


def adjacency_matrix(positions, R: float) -> np.ndarray:
    """Boolean adjacency with the strict rule 0 < |x_ij| < R."""
    x = np.asarray(positions, float)
    diff = x[:, None, :] - x[None, :, :]
    d = np.sqrt(np.sum(diff * diff, axis=-1))
    return (d > 0.0) & (d < R)


def build_graph(positions, R: float) -> ProximityGraph:
    if R <= 0:
        raise ValueError("R must be positive")
    return ProximityGraph.from_adjacency(adjacency_matrix(positions, R))


def layer_partition(g: ProximityGraph, i_f: int) -> LayerPartition:
    if not 0 <= i_f < g.n:
        raise ValueError(f"malicious id {i_f} out of range")
    leaders = frozenset(g.neighbors(i_f))
    followers = frozenset(range(g.n)) - leaders - {i_f}
    return LayerPartition(i_f, leaders, followers)


def is_connected(g: ProximityGraph, subset) -> bool:
    """BFS over the subgraph induced by ``subset``."""
    nodes = set(subset)
    if not nodes:
        raise ValueError("subset must be nonempty")
    A = g.adjacency()
    start = next(iter(nodes))
    seen = {start}
    queue = deque([start])
    while queue:
        i = queue.popleft()
        for j in np.nonzero(A[i])[0]:
            j = int(j)
            if j in nodes and j not in seen:
                seen.add(j)
                queue.append(j)
    return seen == nodes


def laplacian(adj) -> np.ndarray:
    A = np.asarray(adj, float)
    return np.diag(A.sum(axis=1)) - A


def follower_sets(adj, leaders, followers) -> dict[int, list[int]]:
    """F(j): followers reachable from leader j through follower-follower edges.

    Leaders without a follower neighbour are omitted. A follower reachable
    from several leaders appears in each of their sets.
    """
    A = np.asarray(adj, bool)
    fset = set(followers)
    out = {}
    for j in sorted(leaders):
        frontier = [int(k) for k in np.nonzero(A[j])[0] if int(k) in fset]
        if not frontier:
            continue
        seen = set(frontier)
        queue = deque(frontier)
        while queue:
            i = queue.popleft()
            for k in np.nonzero(A[i])[0]:
                k = int(k)
                if k in fset and k not in seen:
                    seen.add(k)
                    queue.append(k)
        out[j] = sorted(seen)
    return out


def leader_sets(F: dict[int, list[int]]) -> dict[int, list[int]]:
    """Invert F(j) into the leader set L(i) of every reached follower."""
    out: dict[int, list[int]] = {}
    for j, fs in F.items():
        for i in fs:
            out.setdefault(i, []).append(j)
    return out


def leader_follower_matrix(adj, leader: int, followers) -> LeaderFollowerMatrix:
    """Build R_j = L_j + Lambda_j for ``leader`` over its follower set."""
    fs = list(followers)
    if not fs:
        raise ValueError("follower set F(j) is empty")
    A = np.asarray(adj, bool)
    sub = A[np.ix_(fs, fs)]
    lam = np.diag(A[fs, leader].astype(float))
    return LeaderFollowerMatrix(leader, fs, laplacian(sub), lam)


def rigidity_matrix(positions, edges) -> np.ndarray:
    x = np.asarray(positions, float)
    d, m = x.shape
    M = np.zeros((len(edges), d * m))
    for r, (i, j) in enumerate(edges):
        xij = x[i] - x[j]
        M[r, i * m:(i + 1) * m] = xij
        M[r, j * m:(j + 1) * m] = -xij
    return M


def rigidity_rank(positions, edges, rtol: float = 1e-8) -> int:
    M = rigidity_matrix(positions, edges)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > rtol * s[0])) if s[0] > 0 else 0


@dataclass(frozen=True)
class RigidityReport:
    rank: int
    generic_rank: int

    @property
    def degenerate(self) -> bool:
        return self.rank < self.generic_rank


def rigidity_report(positions, edges) -> RigidityReport:
    x = np.asarray(positions, float)
    d, m = x.shape
    if d < 3:
        raise ValueError("rigidity diagnostic needs at least 3 vertices")
    return RigidityReport(rigidity_rank(x, edges), m * d - m * (m + 1) // 2)
