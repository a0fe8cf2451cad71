"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import math
import time

import numpy as np
import pytest

from conftest import record_acceptance
from flockcontain.controllers import balance_residual
from flockcontain.engine import COLLISION, EDGE_LOST, ESCAPE, final_containment, run
from flockcontain.potentials import BoundedPotential, LeaderPotential, compute_bar_H
from flockcontain.scenarios import (R_EXPERIMENT, all_normal_scenario, conventional_experiment,
                                    experiment_scenario, random_admissible,
                                    single_neighbour_scenario)
from flockcontain.topology import leader_follower_matrix

from oracles import central_gradient, random_vector, rel_err
from test_topology import random_connected_graph

R = R_EXPERIMENT
K_BAR = np.array([10.0, 10.0, 1e6])


def report(n, ok, detail):
    record_acceptance(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def test_criterion_1_balance():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        s = int(rng.integers(2, 9))
        delta = rng.uniform(0, R / 2)
        while delta == 0.0:
            delta = rng.uniform(0, R / 2)
        k = rng.uniform(-K_BAR, K_BAR)
        res = balance_residual(s, delta, k, R, 15000.0, rng.uniform(0, 2 * math.pi),
                               velocity=rng.normal(0, 20, 2))
        worst = max(worst, res / (1 + np.linalg.norm(k)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 2.0
    report(1, ok, f"max |u|/(1+|k|) = {worst:.2e} (tol 1e-9), {elapsed:.2f} s (limit 2 s)")


def test_criterion_2_potentials():
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    pot = BoundedPotential(R, 15000.0)
    h = 1e-6 * R
    ends = max(abs(pot.v_pair(0.0)[2] - pot.E), abs(pot.v_pair(R)[2] - pot.E)) / pot.E
    x_min = pot.delta * np.array([math.cos(0.4), math.sin(0.4)])
    g_min = float(np.linalg.norm(pot.grad(x_min)))

    def norm_of(f):
        return lambda z: f(float(np.linalg.norm(z)))

    families = {
        "V": (norm_of(lambda d: pot.v_pair(d)[2]), pot.grad),
        "V_a": (norm_of(lambda d: pot.v_pair(d)[0]), pot.grad_a),
        "V_r": (norm_of(lambda d: pot.v_pair(d)[1]), pot.grad_r),
    }
    worst = {}
    for name, (f, g) in families.items():
        worst[name] = max(rel_err(g(x), central_gradient(f, x, h))
                          for x in (random_vector(rng, 1e-3 * R, R - 1e-3 * R)
                                    for _ in range(1000)))
    errs = []
    for _ in range(1000):
        ka, kr = rng.uniform(-10, 10), rng.uniform(-1e6, 1e6)
        x = random_vector(rng, 1e-3 * R, R - 1e-3 * R)
        f = norm_of(lambda d: ka * pot.v_pair(d)[0] + kr * pot.v_pair(d)[1])
        errs.append(rel_err(pot.tilde_grad(x, ka, kr), central_gradient(f, x, h)))
    worst["V~"] = max(errs)
    errs = []
    while len(errs) < 1000:
        xs = random_vector(rng, 1e-3 * R, R - 1e-3 * R)
        x = random_vector(rng, 1e-3 * R, R - 1e-3 * R)
        if np.linalg.norm(x - xs) < 1e-3 * R:
            continue
        p = LeaderPotential(R, 10 ** rng.uniform(0, 18), xs)
        errs.append(rel_err(p.grad(x), central_gradient(p.value, x, h)))
    worst["V^"] = max(errs)
    elapsed = time.perf_counter() - t0
    ok = ends <= 1e-12 and g_min < 1e-10 and max(worst.values()) <= 1e-6 and elapsed < 5.0
    fd = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(2, ok, f"ends {ends:.1e}, |grad| at min {g_min:.1e}, max FD rel err: {fd}, "
                  f"{elapsed:.2f} s")


def test_criterion_3_experiment(experiment_run):
    rec, elapsed = experiment_run
    plan = rec.plan
    spread_ratio = rec.vel_spread[-1] / rec.vel_spread[0]
    dist_err = float(np.max(np.abs(rec.distance_errors[-1])))
    u6 = float(rec.containment_residual[-1])
    dmin = float(rec.min_dist.min())
    lost = [e for e in rec.events_of(EDGE_LOST) if e.payload["scope"] == "group"]
    leaders = sorted(plan.partition.leaders)
    checks = {
        "a": spread_ratio < 0.01, "b": dist_err < 0.5, "c": u6 < 0.05,
        "d": dmin > 0.5, "e": not lost, "leaders": leaders == [2, 5, 7, 10],
        "runtime": elapsed < 60.0,
    }
    ok = all(checks.values())
    report(3, ok, f"spread ratio {spread_ratio:.2e}, max | |x_6j|-12 | {dist_err:.3f} m, "
                  f"|u_6| {u6:.3f}, min dist {dmin:.2f} m, group edge losses {len(lost)}, "
                  f"{elapsed:.1f} s  {'' if ok else checks}")


def _h_check(rec):
    H = rec.H
    eps = 1e-6 * max(1.0, H[0])
    return float(np.max(np.diff(H)) / eps), H[0] < rec.plan.H_bar


def test_criterion_4_energy(experiment_run):
    rec, _ = experiment_run
    inc, below = _h_check(rec)
    worst, all_below, bad = inc, below, []
    for seed in range(50):
        r = run(random_admissible(seed))
        inc, below = _h_check(r)
        if inc > 1 or not below:
            bad.append(seed)
        worst = max(worst, inc)
        all_below &= below
    ok = worst <= 1.0 and all_below
    report(4, ok, f"max step increase / eps_H = {worst:.2e} over fixture + 50 random, "
                  f"H(0) < H_bar on all: {all_below}  {bad or ''}")


def test_criterion_5_filter_order():
    ratios, largest = [], 0.0
    for seed in range(10):
        cfg = random_admissible(100 + seed, t_end=0.5)
        defects = []
        for dt in (1e-3, 5e-4):
            cfg.dt = dt
            defects.append(float(np.nanmax(run(cfg).filter_defect)))
        ratios.append(defects[0] / max(defects[1], 1e-300))
        largest = max(largest, *defects)
    ok = min(ratios) >= 8.0
    report(5, ok, f"defect(dt)/defect(dt/2) min {min(ratios):.2f} max {max(ratios):.2f} "
                  f"(need >= 8); largest defect at either step {largest:.1e}")


def test_criterion_6_lemma2():
    rng = np.random.default_rng(606)
    lam = []
    for _ in range(100):
        n = int(rng.integers(1, 12))
        A = np.zeros((n + 1, n + 1), bool)
        A[1:, 1:] = random_connected_graph(rng, n, int(rng.integers(0, 2 * n)))
        hits = rng.choice(np.arange(1, n + 1), int(rng.integers(1, n + 1)), replace=False)
        A[0, hits] = A[hits, 0] = True
        lam.append(leader_follower_matrix(A, 0, list(range(1, n + 1))).lam_min)
    mono = 0
    for _ in range(100):
        n = int(rng.integers(2, 12))
        A = np.zeros((n + 1, n + 1), bool)
        A[1:, 1:] = random_connected_graph(rng, n, 0)
        A[0, int(rng.integers(1, n + 1))] = True
        A[:, 0] = A[0, :]
        B = A.copy()
        for _ in range(int(rng.integers(1, 8))):
            i, j = rng.choice(n + 1, 2, replace=False)
            B[i, j] = B[j, i] = True
        fs = list(range(1, n + 1))
        mono += leader_follower_matrix(B, 0, fs).lam_min >= \
            leader_follower_matrix(A, 0, fs).lam_min - 1e-12
    ok = min(lam) > 0 and mono == 100
    report(6, ok, f"min lambda_min over 100 graphs {min(lam):.3e}, "
                  f"monotone on {mono}/100 supergraph pairs")


def test_criterion_7_all_normal():
    rec = run(all_normal_scenario())
    spread = float(rec.vel_spread[-1])
    collisions = len(rec.events_of(COLLISION))
    ok = spread < 1e-3 and collisions == 0 and rec.min_dist.min() > 0
    report(7, ok, f"velocity spread at 30 s {spread:.2e} m/s (need < 1e-3), "
                  f"min dist {rec.min_dist.min():.2f} m, collisions {collisions}")


def test_criterion_8_negative_controls():
    rec = run(single_neighbour_scenario(), force=True)
    esc = rec.events_of(ESCAPE)
    if esc:
        n = int(np.searchsorted(rec.times, esc[0].t))
        j = esc[0].payload["j"]
        d_esc = float(np.linalg.norm(rec.X[n, 0] - rec.X[n, j]))
    else:
        d_esc = float("nan")
    ok_a = bool(esc) and d_esc >= R
    conv = run(conventional_experiment())
    cont = final_containment(conv)
    ok_b = not cont.contained
    errs = max(abs(v) for v in cont.distance_errors.values())
    report(8, ok_a and ok_b,
           f"(a) escape at t={esc[0].t if esc else float('nan'):.3f} s, distance {d_esc:.2f} m "
           f">= R; (b) conventional followers: contained={cont.contained}, "
           f"|u_6|={cont.u_residual:.3f}, max distance error {errs:.2f} m")


def _shifted(dx, dv):
    cfg = experiment_scenario()
    for a in cfg.agents:
        a.position = a.position + dx
        a.velocity = a.velocity + dv
    return cfg


def _pair_distances(rec):
    return np.linalg.norm(rec.X[:, :, None] - rec.X[:, None], axis=-1)


def _relative_velocities(rec):
    return rec.V - rec.V[:, :1]


def test_criterion_9_determinism(experiment_run):
    base, _ = experiment_run
    again = run(experiment_scenario())
    identical = all(np.array_equal(getattr(base, k), getattr(again, k), equal_nan=True)
                    for k in ("times", "X", "V", "U", "H", "k_hat", "ups_parts"))
    identical &= [(e.t, e.kind, e.payload) for e in base.events] == \
        [(e.t, e.kind, e.payload) for e in again.events]

    def scaled(a, b):
        return float(np.nanmax(np.abs(a - b)) / max(1.0, np.nanmax(np.abs(a))))

    worst = {}
    for name, cfg in (("translation", _shifted(np.array([1000.0, -500.0]), 0.0)),
                      ("velocity", _shifted(0.0, np.array([5.0, -3.0])))):
        rec = run(cfg)
        worst[name] = max(scaled(_pair_distances(base), _pair_distances(rec)),
                          scaled(_relative_velocities(base), _relative_velocities(rec)),
                          scaled(base.U, rec.U), scaled(base.H, rec.H))
    ok = identical and max(worst.values()) < 1e-9
    report(9, ok, f"bit-identical rerun: {identical}; max scaled change of distances, "
                  f"relative velocities, controls and H: translation "
                  f"{worst['translation']:.1e}, velocity {worst['velocity']:.1e}")
