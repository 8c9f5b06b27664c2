"""Command-line front end.

Subcommands: ``validate | simulate | closedform | phat | occupancy | sweep``.
Each run validates the parameter regime first (skippable with
``--allow-unvalidated``), writes delimited/JSON results plus rendered
figures under the output directory, and embeds the seed and effective
configuration in every file.

Exit codes: 0 success, 2 configuration error, 3 hypothesis-validation
failure, 4 estimation-quality failure (unresolved runs or a reducible
estimated chain).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, figures, reporting, stability
from .config import ConfigError, ExperimentConfig, build_config
from .dynamics import MODE_APLA, MODE_PLA, Recorder, run
from .games import validate_hypotheses
from .stability import EstimationQualityError, ReducibleChainError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VALIDATION = 3
EXIT_ESTIMATION = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="apla-lab",
        description="Learning-automata game dynamics: simulation, closed forms, "
        "and stochastic-stability estimation.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON experiment configuration")
    common.add_argument("--seed", type=int, help="master seed (overrides config and env)")
    common.add_argument("--mode", choices=[MODE_APLA, MODE_PLA], help="dynamics mode")
    common.add_argument("--lambda", dest="lam", type=float, help="tremble probability")
    common.add_argument("--delta", type=float, help="neighborhood radius")
    common.add_argument("--horizon", type=int, help="steps to run")
    common.add_argument("--burn-in", dest="burn_in", type=int, help="steps to discard")
    common.add_argument("--samples", type=int, help="Monte-Carlo samples per chain row")
    common.add_argument("--t-max", dest="t_max", type=int, help="absorption step cap")
    common.add_argument("--out", metavar="PATH", help="output directory")
    common.add_argument("--threads", type=int, help="worker cap for Monte-Carlo fan-out")
    common.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    common.add_argument(
        "--allow-unvalidated", action="store_true",
        help="run even when the hypothesis checks fail",
    )
    common.add_argument(
        "--dump-config", action="store_true",
        help="print the effective configuration and exit",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (
        ("validate", "check the parameter regime against the game"),
        ("simulate", "run the learning dynamics and record a trajectory"),
        ("closedform", "constant-action run vs closed form, with the aspiration envelope"),
        ("phat", "estimate the vertex-state transition chain and its stationary distribution"),
        ("occupancy", "long-run time fractions near each vertex state"),
        ("sweep", "occupancy-vs-stationary distance across tremble rates"),
    ):
        sub.add_parser(name, parents=[common], help=doc)
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    out = {
        "seed": args.seed,
        "mode": args.mode,
        "lam": args.lam,
        "delta": args.delta,
        "horizon": args.horizon,
        "burn_in": args.burn_in,
        "samples": args.samples,
        "t_max": args.t_max,
        "out": args.out,
        "threads": args.threads,
        "allow_unvalidated": args.allow_unvalidated,
    }
    if args.no_figures:
        out["figures"] = False
    return out


def _meta(cfg: ExperimentConfig, command: str) -> dict:
    # drop execution-environment keys so reruns are bitwise-identical
    # regardless of output location or worker count
    config = cfg.effective_dict()
    for key in ("out", "threads", "figures"):
        config.pop(key, None)
    return {
        "command": command,
        "seed": cfg.params.seed,
        "config": config,
    }


def _validate_or_fail(cfg: ExperimentConfig) -> int | None:
    report = validate_hypotheses(cfg.game, cfg.params, cfg.delta)
    if not report.ok:
        print(report.summary())
        if not cfg.allow_unvalidated:
            print("hypothesis checks failed (use --allow-unvalidated to run anyway)")
            return EXIT_VALIDATION
        print("continuing despite failed checks (--allow-unvalidated)")
    return None


def cmd_validate(cfg: ExperimentConfig) -> int:
    report = validate_hypotheses(cfg.game, cfg.params, cfg.delta)
    print(report.summary())
    reporting.write_json(
        cfg.out / "validate.json", report.to_dict(), _meta(cfg, "validate")
    )
    return EXIT_OK if report.ok else EXIT_VALIDATION


def cmd_simulate(cfg: ExperimentConfig) -> int:
    code = _validate_or_fail(cfg)
    if code is not None:
        return code
    block = cfg.simulate
    rec = Recorder(
        stride=block.stride,
        actions="actions" in block.record,
        strategies="strategies" in block.record,
        aspirations="aspirations" in block.record,
        measurements="measurements" in block.record,
    )
    traj = run(cfg.game, cfg.params, block.horizon, recorder=rec)
    meta = _meta(cfg, "simulate")
    reporting.write_trajectory_csv(cfg.out / "trajectory.csv", traj, cfg.game, meta)
    if cfg.figures and traj.strategies is not None:
        figures.render_trajectory(cfg.out / "trajectory.png", traj, cfg.game, meta)
    print(f"simulated {block.horizon} steps; final profile "
          f"{cfg.game.profile_label(traj.final_state.profile)}")
    return EXIT_OK


def cmd_closedform(cfg: ExperimentConfig) -> int:
    code = _validate_or_fail(cfg)
    if code is not None:
        return code
    block = cfg.closedform
    game, params = cfg.game, cfg.params
    profile = block.profile if block.profile is not None else (0,) * game.num_players
    profile = game.validate_profile(profile)
    player = block.player
    rho0 = block.rho0 if block.rho0 is not None else float(game.utilities[player].min())
    chosen = profile[player]
    k = game.action_counts[player]
    rest = (1.0 - block.x0) / (k - 1) if k > 1 else 0.0
    x_player = [block.x0 if j == chosen else rest for j in range(k)]
    strategies = [
        x_player if i == player else [1.0 / game.action_counts[i]] * game.action_counts[i]
        for i in range(game.num_players)
    ]
    aspirations = [
        rho0 if i == player else game.utility(i, profile) for i in range(game.num_players)
    ]
    sim = analysis.constant_action_run(
        game, params, profile, block.horizon,
        strategies=strategies, aspirations=aspirations,
    )
    inputs = analysis.ClosedFormInputs(
        game=game, params=params, player=player, profile=profile,
        x0=block.x0, rho0=rho0,
    )
    closed = analysis.closed_form_strategy_path(
        inputs, block.horizon,
        rho_path=sim.aspirations[: block.horizon, player],
        measured_path=sim.measurements[:, player],
    )
    iterated = sim.strategies[player][:, chosen]
    times = np.arange(block.horizon + 1)
    env_t, env_lower, env_upper = analysis.aspiration_envelope_path(
        inputs.utility_gap, params.noise.bound, params.epsilon, params.nu_value,
        block.horizon,
    )
    rho_minus_u = sim.aspirations[1:, player] - inputs.nominal_utility
    meta = _meta(cfg, "closedform")
    reporting.write_closedform_csv(cfg.out / "closedform.csv", times, closed, iterated, meta)
    reporting.write_envelope_csv(
        cfg.out / "envelope.csv", env_t, env_lower, rho_minus_u, env_upper, meta
    )
    if cfg.figures:
        figures.render_closedform(
            cfg.out / "closedform.png", times, closed, iterated,
            env_t, env_lower, rho_minus_u, env_upper, meta,
        )
    max_err = float(np.max(np.abs(closed - iterated)))
    print(f"closed form vs iterated: max abs deviation {max_err:.3e} "
          f"over {block.horizon} steps")
    return EXIT_OK


def cmd_phat(cfg: ExperimentConfig) -> int:
    code = _validate_or_fail(cfg)
    if code is not None:
        return code
    block = cfg.phat
    chain = stability.estimate_chain(
        cfg.game, cfg.params, cfg.delta, block.samples, block.t_max,
        max_unresolved=block.max_unresolved, threads=cfg.threads,
    )
    pi = stability.stationary(chain, method=block.method)
    meta = _meta(cfg, "phat")
    reporting.write_chain_json(cfg.out / "chain.json", chain, pi, meta)
    if cfg.figures:
        figures.render_chain(cfg.out / "chain.png", chain, pi, meta)
    print("stationary weights:")
    for label, w in zip(chain.labels, pi.weights):
        print(f"  {label}: {w:.4f}")
    print(f"residual {pi.residual:.2e} ({pi.method}); "
          f"max unresolved fraction {float(chain.unresolved.max()):.4f}")
    return EXIT_OK


def cmd_occupancy(cfg: ExperimentConfig) -> int:
    code = _validate_or_fail(cfg)
    if code is not None:
        return code
    block = cfg.occupancy
    occ = stability.estimate_occupancy(
        cfg.game, cfg.params, block.horizon, block.burn_in, cfg.delta,
        rho_delta=block.rho_delta,
    )
    meta = _meta(cfg, "occupancy")
    reporting.write_occupancy_csv(cfg.out / "occupancy.csv", occ, meta)
    if cfg.figures:
        figures.render_occupancy(cfg.out / "occupancy.png", occ, meta)
    for label, f in zip(occ.labels, occ.fractions):
        print(f"  {label}: {f:.4f}")
    print(f"  unclassified: {occ.unclassified:.4f}")
    return EXIT_OK


def cmd_sweep(cfg: ExperimentConfig) -> int:
    code = _validate_or_fail(cfg)
    if code is not None:
        return code
    block = cfg.sweep
    if block.chain is not None:
        path = Path(block.chain)
        if not path.exists():
            raise ConfigError(f"chain file not found: {path}")
        data = json.loads(path.read_text(encoding="utf-8"))
        chain = stability.chain_from_dict(data["chain"], cfg.game)
    else:
        chain = stability.estimate_chain(
            cfg.game, cfg.params, cfg.delta, cfg.phat.samples, cfg.phat.t_max,
            max_unresolved=cfg.phat.max_unresolved, threads=cfg.threads,
        )
    result = stability.sweep_lambda(
        cfg.game, cfg.params, list(block.lambdas), block.horizon, block.burn_in,
        cfg.delta, chain, n_seeds=block.seeds, rho_delta=cfg.occupancy.rho_delta,
        threads=cfg.threads,
    )
    meta = _meta(cfg, "sweep")
    reporting.write_sweep_csv(cfg.out / "sweep.csv", result, meta)
    reporting.write_sweep_summary_csv(cfg.out / "sweep_summary.csv", result, meta)
    if cfg.figures:
        figures.render_sweep(cfg.out / "sweep.png", result, meta)
    for agg in result.aggregates:
        print(f"  lambda {agg.lam:g}: TV {agg.mean_tv:.4f} +- {agg.se_tv:.4f} "
              f"(unclassified {agg.mean_unclassified:.3f})")
    print(f"trend non-increasing within 2 SE: {result.trend_holds()}")
    return EXIT_OK


_COMMANDS = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "closedform": cmd_closedform,
    "phat": cmd_phat,
    "occupancy": cmd_occupancy,
    "sweep": cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_config(args.config, _overrides(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.dump_config:
        print(cfg.dump())
        return EXIT_OK
    try:
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EstimationQualityError, ReducibleChainError) as exc:
        print(f"estimation quality error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


def console() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
