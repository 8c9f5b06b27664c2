"""Experiment configuration: one self-describing file plus flag overrides.

A configuration is a JSON object with a ``game`` (builtin name, inline
definition, or ``{"file": path}``), a ``params`` block, and per-command
blocks.  Flags always win over file values.  The seed resolution order is:
``--seed`` flag, then the config file, then the ``APLA_LAB_SEED``
environment variable, then 0.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from .dynamics import MODE_APLA, LearnerParams
from .games import GameSpec, NoiseModel, builtin, game_from_dict, game_to_dict, load_game

SEED_ENV_VAR = "APLA_LAB_SEED"


class ConfigError(Exception):
    """Unusable configuration input (bad file, unknown field, bad value)."""


_PARAM_DEFAULTS = {
    "epsilon": 0.06,
    "lambda": 0.04,
    "nu": None,
    "h": 0.04,
    "c": 10.0,
    "mode": MODE_APLA,
    "noise": {"bound": 0.02, "distribution": "uniform"},
}


@dataclass(frozen=True)
class SimulateBlock:
    horizon: int = 200_000
    stride: int = 100
    record: tuple[str, ...] = ("actions", "strategies", "aspirations", "measurements")


@dataclass(frozen=True)
class ClosedFormBlock:
    horizon: int = 1_000
    player: int = 0
    profile: tuple[int, ...] | None = None
    x0: float = 0.5
    rho0: float | None = None


@dataclass(frozen=True)
class ChainBlock:
    samples: int = 10_000
    t_max: int = 10_000
    max_unresolved: float = 0.01
    method: str = "auto"


@dataclass(frozen=True)
class OccupancyBlock:
    horizon: int = 200_000
    burn_in: int = 20_000
    rho_delta: float | None = None


@dataclass(frozen=True)
class SweepBlock:
    lambdas: tuple[float, ...] = (0.08, 0.04, 0.02, 0.01)
    horizon: int = 100_000
    burn_in: int = 10_000
    seeds: int = 10
    chain: str | None = None


_BLOCK_TYPES = {
    "simulate": SimulateBlock,
    "closedform": ClosedFormBlock,
    "phat": ChainBlock,
    "occupancy": OccupancyBlock,
    "sweep": SweepBlock,
}

_TOP_KEYS = {
    "game", "params", "delta", "threads", "out", "figures", "allow_unvalidated",
} | set(_BLOCK_TYPES)


@dataclass
class ExperimentConfig:
    game: GameSpec
    game_data: dict
    params: LearnerParams
    delta: float = 0.05
    threads: int = 1
    out: Path = Path("results")
    figures: bool = True
    allow_unvalidated: bool = False
    simulate: SimulateBlock = field(default_factory=SimulateBlock)
    closedform: ClosedFormBlock = field(default_factory=ClosedFormBlock)
    phat: ChainBlock = field(default_factory=ChainBlock)
    occupancy: OccupancyBlock = field(default_factory=OccupancyBlock)
    sweep: SweepBlock = field(default_factory=SweepBlock)

    def effective_dict(self) -> dict:
        """The full, canonical configuration this run uses; reparsing it
        reproduces the same effective configuration."""
        blocks = {}
        for name in _BLOCK_TYPES:
            block = asdict(getattr(self, name))
            for key, value in block.items():
                if isinstance(value, tuple):
                    block[key] = list(value)
            blocks[name] = block
        return {
            "game": self.game_data,
            "params": self.params.to_dict(),
            "delta": self.delta,
            "threads": self.threads,
            "out": str(self.out),
            "figures": self.figures,
            "allow_unvalidated": self.allow_unvalidated,
            **blocks,
        }

    def dump(self) -> str:
        return json.dumps(self.effective_dict(), indent=2, sort_keys=True)


def _parse_game(spec: Any) -> tuple[GameSpec, NoiseModel | None]:
    if isinstance(spec, str):
        try:
            return builtin(spec), None
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if not isinstance(spec, Mapping):
        raise ConfigError(f"'game' must be a name or an object, got {type(spec).__name__}")
    data = dict(spec)
    if "builtin" in data:
        name = data.pop("builtin")
        try:
            return builtin(name, **{k: float(v) for k, v in data.items()}), None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad builtin game spec: {exc}") from exc
    if "file" in data:
        path = Path(data["file"])
        if not path.exists():
            raise ConfigError(f"game file not found: {path}")
        try:
            return load_game(path)
        except (ValueError, json.JSONDecodeError) as exc:
            raise ConfigError(f"bad game file {path}: {exc}") from exc
    try:
        return game_from_dict(data)
    except ValueError as exc:
        raise ConfigError(f"bad inline game definition: {exc}") from exc


def _parse_block(name: str, data: Mapping) -> Any:
    cls = _BLOCK_TYPES[name]
    fields = {f for f in cls.__dataclass_fields__}
    unknown = set(data) - fields
    if unknown:
        raise ConfigError(f"unknown keys in '{name}' block: {sorted(unknown)}")
    kwargs = dict(data)
    for key in ("record", "lambdas", "profile"):
        if key in kwargs and kwargs[key] is not None:
            kwargs[key] = tuple(kwargs[key])
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad '{name}' block: {exc}") from exc


def _resolve_seed(file_params: Mapping, overrides: Mapping) -> int:
    if overrides.get("seed") is not None:
        return int(overrides["seed"])
    if file_params.get("seed") is not None:
        return int(file_params["seed"])
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from exc
    return 0


def build_config(
    config_path: str | os.PathLike | None, overrides: Mapping[str, Any] | None = None
) -> ExperimentConfig:
    """Assemble the effective configuration from a file and flag overrides."""
    overrides = dict(overrides or {})
    raw: dict = {}
    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")

    game, file_noise = _parse_game(raw.get("game", "stag_hunt"))

    file_params = dict(raw.get("params", {}))
    unknown = set(file_params) - (set(_PARAM_DEFAULTS) | {"seed"})
    if unknown:
        raise ConfigError(f"unknown keys in 'params': {sorted(unknown)}")
    merged = dict(_PARAM_DEFAULTS)
    merged.update({k: v for k, v in file_params.items() if k != "seed"})
    if "noise" not in file_params and file_noise is not None:
        merged["noise"] = file_noise.to_dict()
    if overrides.get("mode") is not None:
        merged["mode"] = overrides["mode"]
    if overrides.get("lam") is not None:
        merged["lambda"] = overrides["lam"]
    merged["seed"] = _resolve_seed(file_params, overrides)
    try:
        params = LearnerParams.from_dict(merged)
    except ValueError as exc:
        raise ConfigError(f"bad parameters: {exc}") from exc

    blocks = {}
    for name in _BLOCK_TYPES:
        data = raw.get(name, {})
        if not isinstance(data, Mapping):
            raise ConfigError(f"'{name}' block must be an object")
        blocks[name] = _parse_block(name, data)

    cfg = ExperimentConfig(
        game=game,
        game_data=game_to_dict(game),
        params=params,
        delta=float(raw.get("delta", 0.05)),
        threads=int(raw.get("threads", 1)),
        out=Path(raw.get("out", "results")),
        figures=bool(raw.get("figures", True)),
        allow_unvalidated=bool(raw.get("allow_unvalidated", False)),
        **blocks,
    )

    if overrides.get("delta") is not None:
        cfg.delta = float(overrides["delta"])
    if overrides.get("threads") is not None:
        cfg.threads = int(overrides["threads"])
    if overrides.get("out") is not None:
        cfg.out = Path(overrides["out"])
    if overrides.get("figures") is not None:
        cfg.figures = bool(overrides["figures"])
    if overrides.get("allow_unvalidated"):
        cfg.allow_unvalidated = True
    if overrides.get("horizon") is not None:
        h = int(overrides["horizon"])
        cfg.simulate = replace(cfg.simulate, horizon=h)
        cfg.closedform = replace(cfg.closedform, horizon=h)
        cfg.occupancy = replace(cfg.occupancy, horizon=h)
        cfg.sweep = replace(cfg.sweep, horizon=h)
    if overrides.get("burn_in") is not None:
        b = int(overrides["burn_in"])
        cfg.occupancy = replace(cfg.occupancy, burn_in=b)
        cfg.sweep = replace(cfg.sweep, burn_in=b)
    if overrides.get("samples") is not None:
        cfg.phat = replace(cfg.phat, samples=int(overrides["samples"]))
    if overrides.get("t_max") is not None:
        cfg.phat = replace(cfg.phat, t_max=int(overrides["t_max"]))

    if cfg.delta <= 0.0:
        raise ConfigError(f"delta must be positive, got {cfg.delta}")
    if cfg.threads < 1:
        raise ConfigError(f"threads must be >= 1, got {cfg.threads}")
    return cfg
