"""Figures for a finished run, rendered straight from a SimulationRecord."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .engine import SimulationRecord  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.2),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.fontsize": 8,
    "legend.frameon": False,
}

ROLE_COLORS = {"malicious": "#d62728", "leader": "#1f77b4", "follower": "#7f7f7f",
               "normal": "#2ca02c"}


def _roles(rec: SimulationRecord) -> dict:
    plan = rec.plan
    roles = {i: "normal" for i in range(plan.N)}
    for j in plan.leaders:
        roles[int(j)] = "leader"
    for k in plan.followers:
        roles[int(k)] = "follower"
    if plan.f is not None:
        roles[plan.f] = "malicious"
    return roles


def _stride(rec: SimulationRecord, points: int = 2000) -> slice:
    return slice(None, None, max(1, rec.n // points))


def plot_paths(rec: SimulationRecord, ax=None):
    """Planar paths, start marked with a circle and end with a square."""
    ax = ax or plt.gca()
    sl = _stride(rec)
    roles = _roles(rec)
    seen = set()
    for i, role in roles.items():
        xy = rec.X[sl, i, :2]
        label = role if role not in seen else None
        seen.add(role)
        ax.plot(xy[:, 0], xy[:, 1], lw=1.6 if role == "malicious" else 0.9,
                color=ROLE_COLORS[role], label=label)
        ax.plot(*rec.X[0, i, :2], "o", ms=3, color=ROLE_COLORS[role])
        ax.plot(*rec.X[-1, i, :2], "s", ms=3, color=ROLE_COLORS[role])
        ax.annotate(str(i), rec.X[-1, i, :2], fontsize=7, xytext=(3, 3),
                    textcoords="offset points")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="best")
    return ax


def plot_neighbour_distances(rec: SimulationRecord, ax=None):
    """Distance from the malicious agent to each neighbour, with the target."""
    ax = ax or plt.gca()
    plan = rec.plan
    sl = _stride(rec)
    if plan.f is None or not len(plan.leaders):
        ax.text(0.5, 0.5, "no malicious agent", ha="center", transform=ax.transAxes)
        return ax
    t = rec.times[sl]
    for j in plan.leaders:
        d = np.linalg.norm(rec.X[sl, j] - rec.X[sl, plan.f], axis=1)
        ax.plot(t, d, lw=1.0, label=f"|x_{plan.f}{int(j)}|")
    ax.axhline(plan.cfg.leader.delta_bar, color="k", ls="--", lw=0.8, label="target")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("distance [m]")
    ax.legend(loc="best", ncol=2)
    return ax


def plot_velocities(rec: SimulationRecord, ax=None):
    """Every velocity component of every agent."""
    ax = ax or plt.gca()
    sl = _stride(rec)
    roles = _roles(rec)
    t = rec.times[sl]
    for i, role in roles.items():
        for k in range(rec.V.shape[2]):
            ax.plot(t, rec.V[sl, i, k], lw=0.7, color=ROLE_COLORS[role],
                    ls="-" if k == 0 else ":")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("velocity components [m/s]")
    return ax


def plot_energy(rec: SimulationRecord, ax=None):
    """Group and whole-swarm energies on a log axis."""
    ax = ax or plt.gca()
    sl = _stride(rec)
    t = rec.times[sl]
    H = rec.H[sl]
    if np.all(np.isnan(H)):
        ax.text(0.5, 0.5, "no leader group", ha="center", transform=ax.transAxes)
        return ax
    ax.semilogy(t, np.maximum(H, 1e-300), label="H")
    ax.semilogy(t, np.maximum(rec.upsilon()[sl], 1e-300), label="Upsilon")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("energy")
    ax.legend(loc="best")
    return ax


FIGURES = {
    "paths.png": plot_paths,
    "neighbour_distances.png": plot_neighbour_distances,
    "velocities.png": plot_velocities,
    "energy.png": plot_energy,
}


def render_plots(rec: SimulationRecord, out_dir) -> dict:
    """Write one PNG per entry of ``FIGURES``; returns {name: path}."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    with plt.rc_context(STYLE):
        for name, draw in FIGURES.items():
            fig, ax = plt.subplots()
            draw(rec, ax)
            ax.set_title(f"{rec.plan.cfg.name}", fontsize=9)
            fig.tight_layout()
            p = out / name
            fig.savefig(p, metadata={"Software": None})
            plt.close(fig)
            paths[name] = p
    return paths
