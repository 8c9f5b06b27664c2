"""Matplotlib renderings of run results, saved next to the delimited output.

All figures are written as PNG through the Agg backend; output bytes are
deterministic for identical inputs.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .dynamics import Trajectory
from .games import GameSpec
from .stability import EmpiricalChain, OccupancyEstimate, StationaryDistribution, SweepResult

_DPI = 130


def _save(fig, path: Path, meta: Mapping) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    description = json.dumps(dict(meta), sort_keys=True, separators=(",", ":"))
    fig.savefig(tmp, format="png", dpi=_DPI, metadata={"Description": description})
    plt.close(fig)
    os.replace(tmp, path)


def render_trajectory(path: Path, traj: Trajectory, game: GameSpec, meta: Mapping) -> None:
    """Per-agent strategy components over time."""
    n = game.num_players
    fig, axes = plt.subplots(n, 1, figsize=(8, 2.6 * n), sharex=True, squeeze=False)
    for i in range(n):
        ax = axes[i][0]
        if traj.strategies is not None:
            for j in range(game.action_counts[i]):
                ax.plot(traj.times, traj.strategies[i][:, j],
                        label=f"P(action {game.labels[i][j]})", linewidth=1.0)
        ax.set_ylabel(f"agent {i + 1}")
        ax.set_ylim(-0.05, 1.05)
        ax.legend(loc="center right", fontsize=8)
        ax.grid(alpha=0.3)
    axes[-1][0].set_xlabel("t")
    fig.suptitle(f"strategy evolution ({game.name})")
    fig.tight_layout()
    _save(fig, path, meta)


def render_closedform(
    path: Path,
    times: np.ndarray,
    closed: np.ndarray,
    iterated: np.ndarray,
    env_t: np.ndarray,
    env_lower: np.ndarray,
    rho_minus_u: np.ndarray,
    env_upper: np.ndarray,
    meta: Mapping,
) -> None:
    """Closed-form vs iterated strategy, and the aspiration offset envelope."""
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    ax1.plot(times, iterated, label="iterated", linewidth=1.2)
    ax1.plot(times, closed, "--", label="closed form", linewidth=1.2)
    ax1.set_ylabel("chosen-entry strategy")
    ax1.legend(fontsize=8)
    ax1.grid(alpha=0.3)
    ax2.fill_between(env_t, env_lower, env_upper, alpha=0.25, label="envelope")
    ax2.plot(env_t, rho_minus_u, linewidth=1.0, label="aspiration offset")
    ax2.set_xlabel("t")
    ax2.set_ylabel("rho - u")
    ax2.legend(fontsize=8)
    ax2.grid(alpha=0.3)
    fig.suptitle("constant-action run")
    fig.tight_layout()
    _save(fig, path, meta)


def render_occupancy(path: Path, occ: OccupancyEstimate, meta: Mapping) -> None:
    labels = list(occ.labels) + ["unclassified"]
    values = list(occ.fractions) + [occ.unclassified]
    fig, ax = plt.subplots(figsize=(max(6, 1.1 * len(labels)), 4))
    ax.bar(range(len(values)), values)
    ax.set_xticks(range(len(values)))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("time fraction")
    ax.set_title(f"occupancy (lambda={occ.lam:g}, delta={occ.delta:g})")
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    _save(fig, path, meta)


def render_chain(
    path: Path, chain: EmpiricalChain, pi: StationaryDistribution | None, meta: Mapping
) -> None:
    """Transition-matrix heatmap with the stationary weights alongside."""
    s = chain.num_states
    fig, (ax1, ax2) = plt.subplots(
        1, 2, figsize=(9, 4), gridspec_kw={"width_ratios": [3, 2]}
    )
    im = ax1.imshow(chain.matrix, cmap="viridis", vmin=0.0, vmax=1.0)
    ax1.set_xticks(range(s))
    ax1.set_yticks(range(s))
    ax1.set_xticklabels(chain.labels, rotation=45, ha="right", fontsize=8)
    ax1.set_yticklabels(chain.labels, fontsize=8)
    ax1.set_title("estimated transition matrix")
    for i in range(s):
        for j in range(s):
            v = chain.matrix[i, j]
            if v > 0:
                ax1.text(j, i, f"{v:.3f}", ha="center", va="center", fontsize=7,
                         color="white" if v < 0.6 else "black")
    fig.colorbar(im, ax=ax1, fraction=0.046)
    if pi is not None:
        ax2.bar(range(s), pi.weights)
        ax2.set_xticks(range(s))
        ax2.set_xticklabels(chain.labels, rotation=45, ha="right", fontsize=8)
        ax2.set_title("stationary weights")
        ax2.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    _save(fig, path, meta)


def render_sweep(path: Path, result: SweepResult, meta: Mapping) -> None:
    lams = [a.lam for a in result.aggregates]
    means = [a.mean_tv for a in result.aggregates]
    ses = [a.se_tv for a in result.aggregates]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.errorbar(lams, means, yerr=[2 * s for s in ses], marker="o", capsize=3)
    ax.set_xscale("log")
    ax.set_xlabel("tremble rate lambda")
    ax.set_ylabel("TV(conditioned occupancy, stationary)")
    ax.set_title("convergence toward the vertex-state chain")
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    _save(fig, path, meta)
