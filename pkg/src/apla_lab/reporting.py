"""Delimited and JSON result writers.

Every output file embeds the seed and the full effective parameter set as
leading ``#`` comment lines (CSV) or a ``meta`` object (JSON), and is
written atomically via a temporary file in the destination directory.
Execution-environment settings (output directory, worker cap) are kept out
of the embedded metadata so that reruns produce bitwise-identical files
regardless of where or how wide they execute.
"""

from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dynamics import Trajectory
from .games import GameSpec
from .stability import EmpiricalChain, OccupancyEstimate, StationaryDistribution, SweepResult


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_text_atomic(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def meta_comment_lines(meta: Mapping) -> list[str]:
    lines = []
    if "seed" in meta:
        lines.append(f"# seed: {meta['seed']}")
    lines.append("# meta: " + json.dumps(meta, sort_keys=True, separators=(",", ":")))
    return lines


def write_csv(
    path: Path, header: Sequence[str], rows: Iterable[Sequence], meta: Mapping
) -> None:
    buf = io.StringIO()
    for line in meta_comment_lines(meta):
        buf.write(line + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    write_text_atomic(path, buf.getvalue())


def write_json(path: Path, payload: dict, meta: Mapping) -> None:
    data = dict(payload)
    data["meta"] = dict(meta)
    write_text_atomic(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def write_trajectory_csv(path: Path, traj: Trajectory, game: GameSpec, meta: Mapping) -> None:
    """One row per (time, agent): ``t, agent, action, x_0..x_k, rho, u_measured``.

    ``k`` is the largest action count; agents with fewer actions leave the
    extra strategy cells empty.
    """
    k_max = max(game.action_counts)
    header = ["t", "agent", "action"] + [f"x_{j}" for j in range(k_max)] + ["rho", "u_measured"]
    rows = []
    for r, t in enumerate(traj.times):
        for i in range(game.num_players):
            action = traj.actions[r, i] if traj.actions is not None else ""
            if traj.strategies is not None:
                strat = list(traj.strategies[i][r])
                strat += [""] * (k_max - len(strat))
            else:
                strat = [""] * k_max
            rho = traj.aspirations[r, i] if traj.aspirations is not None else ""
            meas = traj.measurements[r, i] if traj.measurements is not None else ""
            rows.append([int(t), i, action, *strat, rho, meas])
    write_csv(path, header, rows, meta)


def write_envelope_csv(
    path: Path,
    times: np.ndarray,
    lower: np.ndarray,
    rho_minus_u: np.ndarray,
    upper: np.ndarray,
    meta: Mapping,
) -> None:
    rows = zip(times.tolist(), lower.tolist(), rho_minus_u.tolist(), upper.tolist())
    write_csv(path, ["t", "lower", "rho_minus_u", "upper"], rows, meta)


def write_closedform_csv(
    path: Path,
    times: np.ndarray,
    closed: np.ndarray,
    iterated: np.ndarray,
    meta: Mapping,
) -> None:
    err = np.abs(closed - iterated)
    rows = zip(times.tolist(), closed.tolist(), iterated.tolist(), err.tolist())
    write_csv(path, ["t", "x_closed_form", "x_iterated", "abs_err"], rows, meta)


def write_occupancy_csv(path: Path, occ: OccupancyEstimate, meta: Mapping) -> None:
    rows = [[label, float(f)] for label, f in zip(occ.labels, occ.fractions)]
    rows.append(["unclassified", float(occ.unclassified)])
    write_csv(path, ["state", "fraction"], rows, meta)


def write_chain_json(
    path: Path,
    chain: EmpiricalChain,
    pi: StationaryDistribution | None,
    meta: Mapping,
) -> None:
    payload = {"chain": chain.to_dict()}
    if pi is not None:
        payload["stationary"] = pi.to_dict()
    write_json(path, payload, meta)


def write_sweep_csv(path: Path, result: SweepResult, meta: Mapping) -> None:
    rows = [
        [row.lam, row.replica, row.tv, row.unclassified] for row in result.rows
    ]
    write_csv(path, ["lambda", "seed", "tv", "unclassified"], rows, meta)


def write_sweep_summary_csv(path: Path, result: SweepResult, meta: Mapping) -> None:
    rows = [
        [agg.lam, agg.mean_tv, agg.se_tv, agg.mean_unclassified]
        for agg in result.aggregates
    ]
    write_csv(path, ["lambda", "mean_tv", "se_tv", "mean_unclassified"], rows, meta)
