import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flockcontain.controllers import (LeaderShape, PairCache, balance_residual, normal_rows,
                                      regressor, sgn_deadband, u_follower, u_leader,
                                      u_malicious, u_normal)
from flockcontain.core import desired_polygon
from flockcontain.potentials import BoundedPotential, LeaderPotential
from flockcontain.scenarios import R_EXPERIMENT

from oracles import central_gradient, rel_err

R = R_EXPERIMENT
POT = BoundedPotential(R, 15000.0)
K_BAR = np.array([10.0, 10.0, 1e6])


def _random_swarm(rng, n=6, spread=15.0):
    X = rng.uniform(-spread, spread, (n, 2))
    V = rng.normal(0, 2.0, (n, 2))
    return X, V


def test_normal_no_neighbours_is_zero():
    X = np.array([[0.0, 0.0], [100.0, 0.0]])
    assert np.array_equal(u_normal(0, X, np.ones((2, 2)), POT), np.zeros(2))


def test_normal_equal_velocities_at_minimum_is_zero():
    X = np.array([[0.0, 0.0], [POT.delta, 0.0]])
    V = np.tile([3.0, 1.0], (2, 1))
    assert np.linalg.norm(u_normal(0, X, V, POT)) < 1e-10


@pytest.mark.parametrize("d", [5.0, 24.0])
def test_normal_pair_force_matches_finite_differences(d):
    X = np.array([[0.0, 0.0], [d, 0.0]])
    u = u_normal(0, X, np.zeros((2, 2)), POT)
    fd = central_gradient(lambda z: POT.value(np.linalg.norm(z - X[1])), X[0], 1e-6 * R)
    assert rel_err(-fd, u) < 1e-6
    # the neighbour sits on +x: too close pushes agent 0 toward -x, too far pulls it in
    assert (u[0] < 0) == (d < POT.delta)


def test_malicious_with_unit_gains_is_normal():
    rng = np.random.default_rng(0)
    X, V = _random_swarm(rng)
    assert np.allclose(u_malicious(0, X, V, POT, (1, 1, 1)), u_normal(0, X, V, POT),
                       rtol=1e-13, atol=1e-13)


def test_malicious_experiment_gains_term_by_term():
    rng = np.random.default_rng(1)
    X, V = _random_swarm(rng)
    pc = PairCache.build(X, V, R)
    nbrs = np.nonzero(pc.A[0])[0]
    assert len(nbrs) >= 2
    align = sum(V[0] - V[j] for j in nbrs)
    rep = sum(POT.grad_r(X[0] - X[j]) for j in nbrs)
    expected = -0.8 * align - 450000.0 * rep
    assert np.allclose(u_malicious(0, X, V, POT, (0.8, 0.0, 450000.0)), expected, rtol=1e-12)


@settings(max_examples=100)
@given(st.integers(0, 10_000))
def test_regressor_bilinear(seed):
    rng = np.random.default_rng(seed)
    X, V = _random_swarm(rng)
    C = regressor(0, X, V, POT)
    for _ in range(5):
        k = rng.uniform(-K_BAR, K_BAR)
        u = u_malicious(0, X, V, POT, k)
        assert np.allclose(u, -C @ k, rtol=1e-12, atol=1e-12 * (1 + np.abs(k).sum()))


def test_regressor_first_column_zero_for_equal_velocities():
    rng = np.random.default_rng(2)
    X, _ = _random_swarm(rng)
    C = regressor(0, X, np.tile([2.0, -1.0], (6, 1)), POT)
    assert np.array_equal(C[:, 0], np.zeros(2))


def test_regressor_potential_columns_vanish_on_polygon():
    X = np.vstack([np.zeros(2), desired_polygon(5, 11.0, 0.4)])
    C = regressor(0, X, np.zeros((6, 2)), POT)
    assert np.abs(C).max() < 1e-9


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 8), st.floats(0.1, R / 2, exclude_max=True), st.floats(0, 2 * math.pi),
       st.floats(-10, 10), st.floats(-10, 10), st.floats(-1e6, 1e6))
def test_balance_on_any_polygon(s, delta, orient, kv, ka, kr):
    k = np.array([kv, ka, kr])
    res = balance_residual(s, delta, k, R, 15000.0, orient, velocity=[30.0, 20.0])
    assert res <= 1e-9 * (1 + np.linalg.norm(k))


def test_balance_residual_experiment_example():
    assert balance_residual(3, 12.0, (0.8, 0.0, 450000.0), R, 15000.0) <= 1e-9


def test_balance_needs_two_neighbours():
    with pytest.raises(ValueError):
        balance_residual(1, 12.0, (0.8, 0.0, 450000.0), R, 15000.0)


@settings(max_examples=50)
@given(st.integers(0, 10_000))
def test_potential_forces_cancel_across_swarm(seed):
    rng = np.random.default_rng(seed)
    X, V = _random_swarm(rng, n=8)
    pc = PairCache.build(X, V, R)
    ga, gr = pc.grad_sums(POT)
    scale = np.abs(ga).sum() + np.abs(gr).sum() + 1.0
    assert np.linalg.norm((ga + gr).sum(axis=0)) <= 1e-10 * scale
    # the alignment part cancels too, so the swarm's total control is zero
    assert np.linalg.norm(normal_rows(pc, POT).sum(axis=0)) <= 1e-10 * scale


# ---- followers --------------------------------------------------------------

def test_follower_hand_example():
    X = np.array([[0.0, 0.0], [POT.delta, 0.0]])
    V = np.array([[0.3, -0.2], [0.0, 0.0]])
    u, adot = u_follower(0, X, V, POT, alpha=2.0, gamma=1.5)
    assert np.allclose(u, [-2.0, 2.0], atol=1e-10)
    assert adot[1] == pytest.approx(1.5 * 0.5)
    assert adot[0] == 0.0


def test_follower_at_rest_in_flock():
    X = np.array([[0.0, 0.0], [POT.delta, 0.0]])
    V = np.tile([1.0, 1.0], (2, 1))
    u, adot = u_follower(0, X, V, POT, alpha=3.0)
    assert np.linalg.norm(u) < 1e-10
    assert not adot.any()


def test_deadband_zeroes_small_differences():
    assert np.array_equal(sgn_deadband([5e-4, -2e-3, 0.0], 1e-3), [0.0, -1.0, 0.0])


@settings(max_examples=50)
@given(st.integers(0, 10_000), st.floats(0, 5))
def test_follower_sign_term_bounded_by_gain_sum(seed, alpha):
    rng = np.random.default_rng(seed)
    X, V = _random_swarm(rng)
    pc = PairCache.build(X, V, R)
    ga, gr = pc.grad_sums(POT)
    u, _ = u_follower(0, X, V, POT, alpha=alpha)
    sgn_part = u + ga[0] + gr[0]
    assert np.all(np.abs(sgn_part) <= alpha * pc.A[0].sum() + 1e-12)


# ---- leaders ----------------------------------------------------------------

def _group(perturb=None):
    off = -desired_polygon(4, 12.0, 0.3)   # leader target minus malicious position
    offsets = {j: off[r] for r, j in enumerate([1, 2, 3, 4])}
    X = np.vstack([np.zeros(2), off])
    if perturb is not None:
        X[perturb[0]] += perturb[1]
    V = np.tile([30.0, 20.0], (5, 1))
    shape = LeaderShape.from_offsets(0, offsets, R, 1e6)
    return X, V, shape, offsets


def test_leader_zero_at_target_shape():
    X, V, shape, _ = _group()
    C = regressor(0, X, V, POT)
    for j in (1, 2, 3, 4):
        u = u_leader(j, X, V, POT, shape, 6.0, 2.0, k_hat=np.zeros(3), C=C)
        assert np.linalg.norm(u) < 1e-9


def test_leader_without_estimate_is_consensus_plus_shape():
    X, V, shape, offsets = _group(perturb=(2, np.array([0.3, -0.1])))
    V = V + np.random.default_rng(3).normal(0, 1, V.shape)
    j = 2
    u = u_leader(j, X, V, POT, shape, 6.0, 2.0, k_hat=np.zeros(3))
    pc = PairCache.build(X, V, R)
    align = sum(V[j] - V[p] for p in range(5) if pc.A[j, p])
    mask, _, grad = shape.pair_terms(pc)
    assert np.allclose(u, -6.0 * align - 2.0 * grad[j].sum(axis=0), rtol=1e-12)


def test_leader_restoring_force_matches_finite_differences():
    j = 3
    X, V, shape, offsets = _group(perturb=(j, np.array([0.1, 0.0])))
    u = u_leader(j, X, V, POT, shape, 6.0, 2.0, k_hat=np.zeros(3), C=np.zeros((2, 3)))
    target = {0: np.zeros(2), **offsets}

    def group_energy(xj):
        total = 0.0
        for p in range(5):
            if p == j:
                continue
            xs = target[j] - target[p]
            total += LeaderPotential(R, 1e6, xs).value(xj - X[p])
        return total

    fd = central_gradient(group_energy, X[j], 1e-6 * R)
    assert rel_err(-2.0 * fd, u) < 1e-6
    # the leader is pushed back toward its slot
    assert u[0] < 0


def test_leader_compensates_estimated_gains():
    X, V, shape, _ = _group()
    C = np.array([[1.0, 2.0, 3.0], [0.0, -1.0, 0.5]])
    k_hat = np.array([0.5, 0.25, 2.0])
    u = u_leader(1, X, V, POT, shape, 6.0, 2.0, k_hat=k_hat, C=C)
    assert np.allclose(u, -C @ k_hat, atol=1e-9)


def test_leader_needs_a_slot():
    X, V, shape, _ = _group()
    with pytest.raises(KeyError):
        u_leader(0, X, V, POT, shape, 6.0, 2.0, k_hat=np.zeros(3))
