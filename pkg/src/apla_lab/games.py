"""Finite strategic-form games with strictly positive payoffs and bounded measurement noise.

Utility tensors are stored dense, one per player, indexed by the joint action
profile ``(a_1, ..., a_n)``.  Flat (serialized) layouts use first-player-fastest
order: flat index ``a_1 + |A_1|*(a_2 + |A_2|*(a_3 + ...))``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterator, Sequence

import numpy as np

if TYPE_CHECKING:
    from .dynamics import LearnerParams

Profile = tuple[int, ...]

_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"


def _default_labels(count: int) -> tuple[str, ...]:
    if count <= len(_ALPHABET):
        return tuple(_ALPHABET[:count])
    return tuple(f"a{j}" for j in range(count))


@dataclass(frozen=True, eq=False)
class GameSpec:
    """An n-player game with one strictly positive payoff tensor per player.

    ``utilities[i]`` has shape ``action_counts`` and maps a joint action
    profile to player i's nominal (noise-free) payoff.  Instances are
    immutable after construction and safe to share across workers.
    """

    action_counts: tuple[int, ...]
    utilities: tuple[np.ndarray, ...]
    labels: tuple[tuple[str, ...], ...] = ()
    name: str = "custom"

    def __post_init__(self) -> None:
        counts = tuple(int(k) for k in self.action_counts)
        if not counts or any(k < 1 for k in counts):
            raise ValueError(f"action counts must be positive integers, got {counts}")
        tensors = tuple(np.ascontiguousarray(u, dtype=float) for u in self.utilities)
        if len(tensors) != len(counts):
            raise ValueError(
                f"expected {len(counts)} utility tensors, got {len(tensors)}"
            )
        for i, u in enumerate(tensors):
            if u.shape != counts:
                raise ValueError(
                    f"player {i} utility tensor has shape {u.shape}, expected {counts}"
                )
            if not np.all(u > 0.0):
                raise ValueError(f"player {i} has non-positive utilities")
            u.setflags(write=False)
        labels = self.labels or tuple(_default_labels(k) for k in counts)
        labels = tuple(tuple(block) for block in labels)
        if len(labels) != len(counts) or any(
            len(block) != k for block, k in zip(labels, counts)
        ):
            raise ValueError("labels do not match action counts")
        object.__setattr__(self, "action_counts", counts)
        object.__setattr__(self, "utilities", tensors)
        object.__setattr__(self, "labels", labels)

    @property
    def num_players(self) -> int:
        return len(self.action_counts)

    @property
    def num_profiles(self) -> int:
        n = 1
        for k in self.action_counts:
            n *= k
        return n

    def validate_profile(self, profile: Sequence[int]) -> Profile:
        prof = tuple(int(a) for a in profile)
        if len(prof) != self.num_players:
            raise ValueError(f"profile {prof} has wrong length for {self.num_players} players")
        for i, (a, k) in enumerate(zip(prof, self.action_counts)):
            if not 0 <= a < k:
                raise ValueError(f"action {a} out of range for player {i} (0..{k - 1})")
        return prof

    def utility(self, player: int, profile: Sequence[int]) -> float:
        """Nominal payoff of ``player`` at the joint action ``profile``."""
        if not 0 <= player < self.num_players:
            raise ValueError(f"player index {player} out of range")
        return float(self.utilities[player][self.validate_profile(profile)])

    def profile_index(self, profile: Sequence[int]) -> int:
        """Flat first-player-fastest index of a profile."""
        prof = self.validate_profile(profile)
        idx = 0
        for a, k in zip(reversed(prof), reversed(self.action_counts)):
            idx = idx * k + a
        return idx

    def profile_from_index(self, index: int) -> Profile:
        if not 0 <= index < self.num_profiles:
            raise ValueError(f"profile index {index} out of range")
        prof = []
        for k in self.action_counts:
            prof.append(index % k)
            index //= k
        return tuple(prof)

    def profiles(self) -> Iterator[Profile]:
        """All joint profiles in flat (first-player-fastest) order."""
        for idx in range(self.num_profiles):
            yield self.profile_from_index(idx)

    def profile_label(self, profile: Sequence[int]) -> str:
        prof = self.validate_profile(profile)
        return "(" + ",".join(self.labels[i][a] for i, a in enumerate(prof)) + ")"

    def flat_utilities(self, player: int) -> np.ndarray:
        """Player's payoffs flattened in first-player-fastest order."""
        return self.utilities[player].flatten(order="F")

    def min_utility(self) -> float:
        return min(float(u.min()) for u in self.utilities)

    def max_utility(self) -> float:
        return max(float(u.max()) for u in self.utilities)


def _uniform_sample(u: float, bound: float) -> float:
    return (2.0 * u - 1.0) * bound


# distribution name -> map of a uniform [0,1) draw to a noise value in [-bound, bound]
_SAMPLERS = {"uniform": _uniform_sample}


@dataclass(frozen=True)
class NoiseModel:
    """Additive measurement noise, bounded in ``[-bound, bound]``.

    Draws are independent across agents and steps.  Only boundedness is
    load-bearing for the dynamics; the distribution is an extension point.
    """

    bound: float = 0.0
    distribution: str = "uniform"

    def __post_init__(self) -> None:
        if self.bound < 0.0:
            raise ValueError(f"noise bound must be non-negative, got {self.bound}")
        if self.distribution not in _SAMPLERS:
            raise ValueError(f"unknown noise distribution {self.distribution!r}")

    def sample(self, rng: np.random.Generator) -> float:
        """One noise value from a single uniform draw (the normative mapping)."""
        return _SAMPLERS[self.distribution](rng.random(), self.bound)

    def sample_array(self, rng: np.random.Generator, size) -> np.ndarray:
        u = rng.random(size)
        return (2.0 * u - 1.0) * self.bound

    def to_dict(self) -> dict:
        return {"bound": self.bound, "distribution": self.distribution}

    @classmethod
    def from_dict(cls, data: dict) -> "NoiseModel":
        return cls(
            bound=float(data.get("bound", 0.0)),
            distribution=str(data.get("distribution", "uniform")),
        )


def measure_utility(
    game: GameSpec,
    player: int,
    profile: Sequence[int],
    noise: NoiseModel,
    rng: np.random.Generator,
) -> float:
    """Noisy payoff measurement: nominal utility plus a fresh bounded draw."""
    return game.utility(player, profile) + noise.sample(rng)


# ---------------------------------------------------------------------------
# builtin games
# ---------------------------------------------------------------------------


def stag_hunt(a: float = 5.0, b: float = 1.0, c: float = 4.0, d: float = 3.0) -> GameSpec:
    """Symmetric 2x2 stag hunt.

    Row player payoffs ``[[a, b], [d, c]]``; the column player's table is the
    transpose.  With the default values (A,A) is payoff-dominant and (B,B)
    risk-dominant.
    """
    u1 = np.array([[a, b], [d, c]], dtype=float)
    return GameSpec(
        action_counts=(2, 2),
        utilities=(u1, u1.T.copy()),
        name="stag_hunt",
    )


def typewriter() -> GameSpec:
    """Symmetric 2x2 coordination game with payoffs 3/2 on the diagonal, 1 off it."""
    u1 = np.array([[3.0, 1.0], [1.0, 2.0]])
    return GameSpec(action_counts=(2, 2), utilities=(u1, u1.T.copy()), name="typewriter")


def prisoners_dilemma() -> GameSpec:
    u1 = np.array([[3.0, 1.0], [4.0, 2.0]])
    return GameSpec(
        action_counts=(2, 2),
        utilities=(u1, u1.T.copy()),
        name="prisoners_dilemma",
    )


_BUILTINS = {
    "stag_hunt": stag_hunt,
    "typewriter": typewriter,
    "prisoners_dilemma": prisoners_dilemma,
}


def builtin(name: str, **params: float) -> GameSpec:
    """Look up a builtin game by name; ``stag_hunt`` accepts a, b, c, d."""
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise ValueError(
            f"unknown builtin game {name!r}; available: {sorted(_BUILTINS)}"
        ) from None
    return factory(**params)


# ---------------------------------------------------------------------------
# game definition files
# ---------------------------------------------------------------------------


def game_to_dict(game: GameSpec, noise: NoiseModel | None = None) -> dict:
    data = {
        "name": game.name,
        "players": game.num_players,
        "action_counts": list(game.action_counts),
        "labels": [list(block) for block in game.labels],
        # one flat array per player, first player's action index varies fastest
        "utilities": [game.flat_utilities(i).tolist() for i in range(game.num_players)],
    }
    if noise is not None:
        data["noise"] = noise.to_dict()
    return data


def game_from_dict(data: dict) -> tuple[GameSpec, NoiseModel | None]:
    try:
        counts = tuple(int(k) for k in data["action_counts"])
        flat = data["utilities"]
    except KeyError as exc:
        raise ValueError(f"game definition missing field {exc}") from None
    players = int(data.get("players", len(flat)))
    if players != len(flat):
        raise ValueError(f"'players' is {players} but {len(flat)} utility arrays given")
    tensors = []
    for i, values in enumerate(flat):
        arr = np.asarray(values, dtype=float)
        if arr.size != int(np.prod(counts)):
            raise ValueError(f"player {i} flat utilities have length {arr.size}")
        tensors.append(arr.reshape(counts, order="F"))
    labels = data.get("labels")
    game = GameSpec(
        action_counts=counts,
        utilities=tuple(tensors),
        labels=tuple(tuple(block) for block in labels) if labels else (),
        name=str(data.get("name", "custom")),
    )
    noise = NoiseModel.from_dict(data["noise"]) if "noise" in data else None
    return game, noise


def load_game(path: str | os.PathLike) -> tuple[GameSpec, NoiseModel | None]:
    with open(path, "r", encoding="utf-8") as fh:
        return game_from_dict(json.load(fh))


def save_game(path: str | os.PathLike, game: GameSpec, noise: NoiseModel | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(game_to_dict(game, noise), fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# hypothesis validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HypothesisCheck:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[HypothesisCheck, ...]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            lines.append(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "checks": [
                {"name": c.name, "passed": c.passed, "detail": c.detail}
                for c in self.checks
            ],
        }


def validate_hypotheses(
    game: GameSpec, params: "LearnerParams", delta: float | None = None
) -> ValidationReport:
    """Check the parameter regime the convergence guarantees require.

    Almost-sure versions of the conditions, using the noise bound as the
    worst case: eps*(u+bound) < 1, h < u-bound, u-bound > 0 over every
    player and profile, and delta > bound when a neighborhood radius is
    supplied.
    """
    eps = params.epsilon
    h = params.h
    bound = params.noise.bound
    u_max = game.max_utility()
    u_min = game.min_utility()

    checks = [
        HypothesisCheck(
            "step_size",
            eps * (u_max + bound) < 1.0,
            f"eps*(u_max+noise) = {eps * (u_max + bound):.6g} < 1",
        ),
        HypothesisCheck(
            "aspiration_floor",
            h < u_min - bound,
            f"h = {h:.6g} < min measured utility {u_min - bound:.6g}",
        ),
        HypothesisCheck(
            "positive_measurements",
            u_min - bound > 0.0,
            f"min measured utility {u_min - bound:.6g} > 0",
        ),
    ]
    if delta is not None:
        checks.append(
            HypothesisCheck(
                "neighborhood_radius",
                delta > bound,
                f"delta = {delta:.6g} > noise bound {bound:.6g}",
            )
        )
    return ValidationReport(tuple(checks))
