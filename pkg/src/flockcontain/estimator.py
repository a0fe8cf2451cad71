"""Filtered-regressor estimator of the malicious gains (k_v, k_a, k_r)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class EstimatorState:
    vF: np.ndarray       # (m,)
    CF: np.ndarray       # (m, 3)
    k_hat: np.ndarray    # (3,)
    a: float
    Gamma: np.ndarray    # (3, 3)

    def __post_init__(self):
        self.Gamma = np.asarray(self.Gamma, float)
        if self.a <= 0:
            raise ValueError("filter gain a must be positive")
        if not np.allclose(self.Gamma, self.Gamma.T):
            raise ValueError("Gamma must be symmetric")
        if np.linalg.eigvalsh(self.Gamma)[0] <= 0:
            raise ValueError("Gamma must be positive definite")

    @classmethod
    def initial(cls, v_if, a: float, Gamma, k_hat0) -> "EstimatorState":
        v_if = np.asarray(v_if, float)
        return cls(v_if.copy(), np.zeros((v_if.size, 3)), np.asarray(k_hat0, float).copy(),
                   a, Gamma)


def filter_derivatives(est: EstimatorState, v_if, C) -> tuple[np.ndarray, np.ndarray]:
    dvF = -est.a * est.vF + est.a * np.asarray(v_if, float)
    dCF = -est.a * est.CF + np.asarray(C, float)
    return dvF, dCF


def estimate_derivative(est: EstimatorState, C, velocity_sums, v_if) -> np.ndarray:
    """Time derivative of k_hat.

    ``velocity_sums`` is the sum over the malicious agent's neighbours of
    (v_j - v_{i_f}). The regressor term enters with a positive sign; with this
    sign it cancels the ``C (k - k_hat)`` coupling in the leaders' relative
    dynamics, which is what makes the group energy nonincreasing.
    """
    C = np.asarray(C, float)
    s = np.asarray(velocity_sums, float)
    resid = est.CF @ est.k_hat + np.asarray(v_if, float) - est.vF
    return est.Gamma @ (C.T @ s) - est.Gamma @ (est.CF.T @ resid)


def prediction_residual(est: EstimatorState, v_if) -> float:
    """|CF k_hat + v_{i_f} - vF|; zero when the estimate explains the filters."""
    return float(np.linalg.norm(est.CF @ est.k_hat + np.asarray(v_if, float) - est.vF))


def filter_defect(est: EstimatorState, v_if, k) -> float:
    """|(v_{i_f} - vF) + CF k|, which the filters keep at zero for the true k."""
    return float(np.linalg.norm(np.asarray(v_if, float) - est.vF + est.CF @ np.asarray(k, float)))
