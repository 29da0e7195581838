"""Figure rendering for the report path.

All figures are written straight to files (Agg backend); the Software
metadata is stripped so identical runs produce identical bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE_KW = {"dpi": 150, "metadata": {"Software": None}}


def render_value_function(path, oracle, env, pv, trace, title=""):
    """u (dotted), its concave envelope (dashed), and the solved value."""
    grid = np.linspace(0.0, 1.0, 801)
    fig, ax = plt.subplots(figsize=(7.0, 4.4))
    ax.plot(grid, oracle.interp(grid), ":", color="0.45", lw=1.4, label="one-shot value u")
    ax.plot(grid, env(grid), "--", color="tab:orange", lw=1.1, label="concave envelope")
    ax.plot(grid, pv(grid), "-", color="tab:blue", lw=2.0, label="limit value v")
    for b in pv.breakpoints()[1:-1]:
        ax.axvline(b, color="0.8", lw=0.7, zorder=0)
    ax.axvline(pv.params.p_star, color="tab:red", lw=0.9, ls="-.", label="invariant belief")
    ax.set_xlabel("belief p")
    ax.set_ylabel("value")
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=9)
    ax.set_xlim(0, 1)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def render_oracle_comparison(path, pv, og, title=""):
    """Solver output against the discrete fixed point, with the gap below."""
    fig, (ax1, ax2) = plt.subplots(
        2, 1, figsize=(7.0, 5.6), sharex=True, height_ratios=[3, 1]
    )
    ax1.plot(og.grid, pv(og.grid), "-", color="tab:blue", lw=1.8, label="limit value v")
    ax1.plot(og.grid, og.values, "--", color="tab:green", lw=1.2,
             label=f"discrete fixed point (n={og.n:g})")
    ax1.set_ylabel("value")
    ax1.legend(loc="best", fontsize=9)
    if title:
        ax1.set_title(title)
    ax2.plot(og.grid, np.abs(pv(og.grid) - og.values), color="0.3", lw=1.0)
    ax2.set_xlabel("belief p")
    ax2.set_ylabel("|gap|")
    ax2.set_xlim(0, 1)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def render_trajectory(path, traj, title=""):
    """Belief path with its events marked."""
    ts = np.linspace(0.0, traj.horizon, 1200)
    ps = [traj.value_at(float(t)) for t in ts]
    fig, ax = plt.subplots(figsize=(7.0, 3.8))
    ax.plot(ts, ps, color="tab:blue", lw=1.4)
    for ev in traj.events:
        ax.plot([ev.time], [ev.belief], "o", ms=3.5, color="tab:red")
    ax.axhline(traj.params.p_star, color="0.6", lw=0.8, ls="-.")
    ax.set_xlabel("time")
    ax.set_ylabel("belief p")
    ax.set_ylim(-0.02, 1.02)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
