"""Pair potentials and their gradients.

Three families live here:

* the bounded pair potential ``V = V_a + V_r`` used by normal agents and
  followers, ceiling ``E`` at distance 0 and ``R``;
* the weighted potential ``k_a V_a + k_r V_r`` the malicious agent runs;
* the shape potential ``hat_v`` pulling a pair toward a desired displacement.

Scalar helpers accept a single relative position; ``coeff_a``/``coeff_r`` and
``hat_v_terms`` are vectorised over arrays and are what the engine calls.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SingularDistance(ValueError):
    """A gradient was requested where the pair distance is 0 or R."""


@dataclass(frozen=True)
class BoundedPotential:
    R: float
    E: float

    def __post_init__(self):
        if self.R <= 0 or self.E <= 0:
            raise ValueError("R and E must be positive")

    @property
    def c(self) -> float:
        return self.R**2 / self.E

    @property
    def delta(self) -> float:
        """Distance of the potential minimum, sqrt(2) R / 2."""
        return np.sqrt(2.0) * self.R / 2.0

    # -- values -----------------------------------------------------------
    def v_pair(self, d: float) -> tuple[float, float, float]:
        if d < 0 or d > self.R:
            raise ValueError(f"distance {d} outside [0, R={self.R}]")
        R2, c, d2 = self.R**2, self.c, d * d
        va = d2 / (R2 - d2 + c)
        vr = (R2 - d2) / (d2 + c)
        return va, vr, va + vr

    def value(self, d):
        """Vectorised V(d); no range check."""
        d2 = np.asarray(d, dtype=float) ** 2
        R2, c = self.R**2, self.c
        return d2 / (R2 - d2 + c) + (R2 - d2) / (d2 + c)

    # -- gradients --------------------------------------------------------
    def coeff_a(self, d2):
        """(dV_a/dd) / d as a function of squared distance."""
        return 2.0 * (self.R**2 + self.c) / (self.R**2 - d2 + self.c) ** 2

    def coeff_r(self, d2):
        """(dV_r/dd) / d as a function of squared distance."""
        return -2.0 * (self.R**2 + self.c) / (d2 + self.c) ** 2

    def dv_dd(self, d: float) -> float:
        return d * (self.coeff_a(d * d) + self.coeff_r(d * d))

    def _check(self, x_ij) -> np.ndarray:
        x = np.asarray(x_ij, dtype=float)
        d = np.linalg.norm(x)
        if d == 0.0 or d >= self.R:
            raise SingularDistance(f"|x_ij| = {d} not in (0, R)")
        return x

    def grad_a(self, x_ij) -> np.ndarray:
        x = self._check(x_ij)
        return self.coeff_a(x @ x) * x

    def grad_r(self, x_ij) -> np.ndarray:
        x = self._check(x_ij)
        return self.coeff_r(x @ x) * x

    def grad(self, x_ij) -> np.ndarray:
        """Gradient of V_ij with respect to x_i (equivalently x_ij)."""
        x = self._check(x_ij)
        d2 = x @ x
        return (self.coeff_a(d2) + self.coeff_r(d2)) * x

    def tilde_grad(self, x_ij, k_a: float, k_r: float) -> np.ndarray:
        """Gradient of the malicious potential k_a V_a + k_r V_r."""
        x = self._check(x_ij)
        d2 = x @ x
        return (k_a * self.coeff_a(d2) + k_r * self.coeff_r(d2)) * x


def v_pair(d: float, R: float, E: float) -> tuple[float, float, float]:
    """Return ``(V_a, V_r, V)`` of the bounded potential at distance ``d``."""
    return BoundedPotential(R, E).v_pair(d)


def grad_v_pair(x_ij, R: float, E: float) -> np.ndarray:
    return BoundedPotential(R, E).grad(x_ij)


def tilde_v_grad(x_ij, k_a: float, k_r: float, R: float, E: float) -> np.ndarray:
    return BoundedPotential(R, E).tilde_grad(x_ij, k_a, k_r)


@dataclass(frozen=True)
class LeaderPotential:
    """Shape potential for one ordered pair with desired displacement ``x_star``.

    ``H_bar`` and ``iota`` set the regularisation of the two barrier terms so
    that the value exceeds ``H_bar`` at distance 0 and R.
    """

    R: float
    H_bar: float
    x_star: np.ndarray
    iota: float = 1.0

    def __post_init__(self):
        ds = float(np.linalg.norm(self.x_star))
        if not 0.0 < ds < self.R:
            raise ValueError("|x_star| must lie in (0, R)")
        if self.iota <= 0:
            raise ValueError("iota must be positive")

    @property
    def delta(self) -> float:
        return float(np.linalg.norm(self.x_star))

    def value(self, x_ij) -> float:
        return float(hat_v_terms(np.asarray(x_ij, float), np.asarray(self.x_star, float),
                                 self.R, self.H_bar + self.iota)[0])

    def grad(self, x_ij) -> np.ndarray:
        x = np.asarray(x_ij, dtype=float)
        d = np.linalg.norm(x)
        if d == 0.0 or d >= self.R:
            raise SingularDistance(f"|x_ij| = {d} not in (0, R)")
        return hat_v_terms(x, np.asarray(self.x_star, float), self.R,
                           self.H_bar + self.iota, with_grad=True)[1]


def hat_v_terms(x, x_star, R: float, h: float, with_grad: bool = False):
    """Shape potential value (and gradient) over trailing-axis vectors.

    ``h`` is ``H_bar + iota``. Works on arrays of shape ``(..., m)``.
    """
    e = x - x_star
    e2 = np.sum(e * e, axis=-1)
    d = np.sqrt(np.sum(x * x, axis=-1))
    ds = np.sqrt(np.sum(x_star * x_star, axis=-1))
    A = R - d + (R - ds) ** 2 / h
    B = d + ds**2 / h
    val = e2 / A + e2 / B
    if not with_grad:
        return val, None
    # d/dx of e2 is 2e; d/dx of d is x/d
    radial = (e2 / A**2 - e2 / B**2) / d
    grad = 2.0 * e * (1.0 / A + 1.0 / B)[..., None] + radial[..., None] * x
    return val, grad


def hat_v(x_ij, p: LeaderPotential) -> float:
    return p.value(x_ij)


def hat_v_grad(x_ij, p: LeaderPotential) -> np.ndarray:
    return p.grad(x_ij)


def hat_v_prime0(x_ij, x_star, R: float) -> float:
    """Unregularised shape potential evaluated at t=0 when choosing H_bar."""
    x = np.asarray(x_ij, float)
    d = float(np.linalg.norm(x))
    if not 0.0 < d < R:
        raise SingularDistance(f"initial |x_ij| = {d} not in (0, R)")
    e2 = float(np.sum((x - np.asarray(x_star, float)) ** 2))
    return e2 / (R - d) + e2 / d


def bar_v(d, R: float):
    """Unregularised pair potential used by the E selection bound."""
    d2 = np.asarray(d, float) ** 2
    return (R**2 - d2) / d2 + d2 / (R**2 - d2)


def compute_bar_Q(positions, velocities, R: float) -> float:
    """Lower bound for the potential ceiling E.

    The max of ``bar_v`` runs over initially interacting pairs; pairs beyond
    ``R`` carry no potential.
    """
    x = np.asarray(positions, float)
    v = np.asarray(velocities, float)
    n = len(x)
    kinetic = 0.5 * float(np.sum(v * v))
    iu = np.triu_indices(n, 1)
    d = np.linalg.norm(x[:, None, :] - x[None, :, :], axis=-1)[iu]
    if np.any(d == 0.0):
        raise SingularDistance("coincident initial positions")
    d = d[d < R]
    worst = float(np.max(bar_v(d, R))) if d.size else 0.0
    return kinetic + n * (n - 1) / 2 * worst


def compute_bar_H(positions, velocities, malicious_id: int, offsets: dict,
                  adjacency, R: float, kappa_x: float, Gamma, k_bar, k_hat0) -> float:
    """Shape-potential ceiling chosen from t=0 quantities.

    ``offsets`` maps leader id to its target displacement ``x_j - x_{i_f}``;
    ``adjacency`` is the boolean t=0 graph used for leader-leader pairs.
    """
    x = np.asarray(positions, float)
    v = np.asarray(velocities, float)
    A = np.asarray(adjacency, bool)
    f = malicious_id
    leaders = sorted(offsets)
    total = 0.0
    for j in leaders:
        oj = np.asarray(offsets[j], float)
        total += kappa_x * hat_v_prime0(x[j] - x[f], oj, R)
        for i in leaders:
            if i != j and A[i, j]:
                total += 0.5 * kappa_x * hat_v_prime0(
                    x[j] - x[i], oj - np.asarray(offsets[i], float), R)
        dv = v[j] - v[f]
        total += 0.5 * float(dv @ dv)
    lam = float(np.max(np.linalg.eigvalsh(np.linalg.inv(np.asarray(Gamma, float)))))
    kb = np.asarray(k_bar, float) + np.abs(np.asarray(k_hat0, float))
    return total + 0.5 * lam * float(kb @ kb)
