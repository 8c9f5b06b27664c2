"""Vertex states, neighborhoods, and constant-action closed forms.

A vertex ("pure strategy") state pins every strategy to the simplex vertex
of one joint action and every aspiration level to that action's nominal
utility.  Distances to such states use the Euclidean norm over concatenated
per-player blocks, with the strategy and aspiration blocks tested
separately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dynamics import MODE_APLA, LearnerParams, SimState, aspiration_factor
from .games import GameSpec
from .rng import DOMAIN_NOISE, derive_generator


@dataclass(frozen=True, eq=False)
class PureStrategyState:
    """A joint action together with its vertex strategies and nominal aspirations."""

    profile: tuple[int, ...]
    strategies: tuple[np.ndarray, ...]
    aspirations: np.ndarray
    label: str
    index: int

    def as_state(self) -> SimState:
        n = len(self.profile)
        return SimState(
            profile=self.profile,
            strategies=self.strategies,
            aspirations=self.aspirations,
            last_noise=np.zeros(n),
            step_count=0,
        )


def pure_strategy_state(game: GameSpec, profile: Sequence[int]) -> PureStrategyState:
    prof = game.validate_profile(profile)
    strategies = []
    for i, a in enumerate(prof):
        e = np.zeros(game.action_counts[i])
        e[a] = 1.0
        e.setflags(write=False)
        strategies.append(e)
    rho = np.asarray([game.utility(i, prof) for i in range(game.num_players)])
    rho.setflags(write=False)
    return PureStrategyState(
        profile=prof,
        strategies=tuple(strategies),
        aspirations=rho,
        label=game.profile_label(prof),
        index=game.profile_index(prof),
    )


def enumerate_pss(game: GameSpec) -> list[PureStrategyState]:
    """All vertex states, one per joint action profile, in flat index order."""
    return [pure_strategy_state(game, prof) for prof in game.profiles()]


def strategy_distance(state: SimState, pss: PureStrategyState) -> float:
    acc = 0.0
    for x, v in zip(state.strategies, pss.strategies):
        d = x - v
        acc += float(d @ d)
    return math.sqrt(acc)


def aspiration_distance(state: SimState, pss: PureStrategyState) -> float:
    d = state.aspirations - pss.aspirations
    return math.sqrt(float(d @ d))


def in_neighborhood(state: SimState, pss: PureStrategyState, delta: float) -> bool:
    """Strictly inside the delta-neighborhood: same joint action, strategy
    block within delta of the vertices, aspiration block within delta of the
    nominal utilities."""
    if delta <= 0.0:
        raise ValueError(f"delta must be positive, got {delta}")
    if state.profile != pss.profile:
        return False
    return strategy_distance(state, pss) < delta and aspiration_distance(state, pss) < delta


def nearest_pss(state: SimState, game: GameSpec) -> tuple[PureStrategyState, float]:
    """The vertex state sharing the current joint action, with the combined
    strategy-plus-aspiration distance to it."""
    pss = pure_strategy_state(game, state.profile)
    sd = strategy_distance(state, pss)
    ad = aspiration_distance(state, pss)
    return pss, math.sqrt(sd * sd + ad * ad)


# ---------------------------------------------------------------------------
# constant-action closed forms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClosedFormInputs:
    """Inputs for the constant-action strategy product formula.

    When one joint action is played forever, the chosen entry obeys
    ``x(t) = 1 - (1 - x(0)) * prod_k (1 - eps*phi(k))``: each step retains
    the distance to the vertex by the factor returned from
    :meth:`step_factor`.
    """

    game: GameSpec
    params: LearnerParams
    player: int
    profile: tuple[int, ...]
    x0: float
    rho0: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "profile", self.game.validate_profile(self.profile))
        if not 0 <= self.player < self.game.num_players:
            raise ValueError(f"player index {self.player} out of range")
        if not 0.0 <= self.x0 <= 1.0:
            raise ValueError(f"x0 must lie in [0, 1], got {self.x0}")

    @property
    def nominal_utility(self) -> float:
        return self.game.utility(self.player, self.profile)

    @property
    def aspiration_shrink(self) -> float:
        """Per-step retention of the initial aspiration gap, ``1 - eps*nu``."""
        return 1.0 - self.params.epsilon * self.params.nu_value

    @property
    def aspiration_growth(self) -> float:
        """Per-step growth of the worst-case noise contribution, ``1 + eps*nu``."""
        return 1.0 + self.params.epsilon * self.params.nu_value

    @property
    def utility_gap(self) -> float:
        """Nominal utility minus the initial aspiration level."""
        return self.nominal_utility - self.rho0

    def step_factor(self, rho: float, measured: float | None = None) -> float:
        """Retention factor ``1 - eps*phi`` for one step at aspiration ``rho``.

        ``measured`` supplies the utility measurement of that step; nominal
        (noise-free) utility is assumed when omitted.
        """
        m = self.nominal_utility if measured is None else measured
        if self.params.mode == MODE_APLA:
            phi = aspiration_factor(m, m - rho, self.params.h, self.params.c)
        else:
            phi = m
        return 1.0 - self.params.epsilon * phi


def closed_form_strategy(
    inputs: ClosedFormInputs,
    rho_path: Sequence[float],
    t: int,
    measured_path: Sequence[float] | None = None,
) -> float:
    """Chosen-entry strategy after ``t`` constant-action steps, via the product formula.

    ``rho_path`` must supply aspiration levels for steps ``0 .. t-1``;
    ``measured_path`` optionally supplies the matching utility measurements
    of a noisy run (the product telescopes the realized per-step factors).
    """
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if len(rho_path) < t:
        raise ValueError(f"rho_path supplies {len(rho_path)} levels, need {t}")
    if measured_path is not None and len(measured_path) < t:
        raise ValueError(f"measured_path supplies {len(measured_path)} values, need {t}")
    if t == 0:
        return inputs.x0
    prod = 1.0
    for k in range(t):
        m = None if measured_path is None else measured_path[k]
        prod *= inputs.step_factor(rho_path[k], m)
    return 1.0 - (1.0 - inputs.x0) * prod


def closed_form_strategy_path(
    inputs: ClosedFormInputs,
    horizon: int,
    rho_path: Sequence[float],
    measured_path: Sequence[float] | None = None,
) -> np.ndarray:
    """Vectorized :func:`closed_form_strategy` for every ``t`` in ``0 .. horizon``."""
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    if len(rho_path) < horizon:
        raise ValueError(f"rho_path supplies {len(rho_path)} levels, need {horizon}")
    out = np.empty(horizon + 1)
    out[0] = inputs.x0
    prod = 1.0
    gap = 1.0 - inputs.x0
    for k in range(horizon):
        m = None if measured_path is None else measured_path[k]
        prod *= inputs.step_factor(rho_path[k], m)
        out[k + 1] = 1.0 - gap * prod
    return out


def aspiration_envelope(
    utility_gap: float, noise_bound: float, epsilon: float, nu: float, t: int
) -> tuple[float, float]:
    """Almost-sure bounds on the aspiration offset ``rho(t) - u`` under a
    constant action: geometric decay of the initial gap plus a growing
    worst-case noise band."""
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    shrink = (1.0 - epsilon * nu) ** t
    growth = (1.0 + epsilon * nu) ** t
    lower = noise_bound - shrink * utility_gap - growth * noise_bound
    upper = -noise_bound - shrink * utility_gap + growth * noise_bound
    return lower, upper


def aspiration_envelope_path(
    utility_gap: float, noise_bound: float, epsilon: float, nu: float, horizon: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Envelope bounds for every ``t`` in ``1 .. horizon`` as (t, lower, upper) arrays."""
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    t = np.arange(1, horizon + 1)
    shrink = (1.0 - epsilon * nu) ** t
    growth = (1.0 + epsilon * nu) ** t
    lower = noise_bound - shrink * utility_gap - growth * noise_bound
    upper = -noise_bound - shrink * utility_gap + growth * noise_bound
    return t, lower, upper


@dataclass
class ConstantActionRun:
    """Paths of a forced constant-action run: strategies per player with
    shape (horizon+1, actions), aspirations (horizon+1, players), and the
    utility measurements (horizon, players) that drove them."""

    profile: tuple[int, ...]
    strategies: tuple[np.ndarray, ...]
    aspirations: np.ndarray
    measurements: np.ndarray


def constant_action_run(
    game: GameSpec,
    params: LearnerParams,
    profile: Sequence[int],
    horizon: int,
    *,
    strategies: Sequence[Sequence[float]] | None = None,
    aspirations: Sequence[float] | None = None,
    noise_values: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> ConstantActionRun:
    """Iterate the update equations with the joint action held fixed.

    Noise defaults to fresh draws from ``params.noise`` on a generator
    derived from ``params.seed``; pass ``noise_values`` of shape
    ``(horizon, players)`` to pin the measurement sequence exactly.
    """
    prof = game.validate_profile(profile)
    n = game.num_players
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    if noise_values is None:
        if rng is None:
            rng = derive_generator(params.seed, DOMAIN_NOISE)
        noise_values = params.noise.sample_array(rng, (horizon, n))
    else:
        noise_values = np.asarray(noise_values, dtype=float)
        if noise_values.shape != (horizon, n):
            raise ValueError(f"noise_values must have shape ({horizon}, {n})")
    if strategies is None:
        x = [[1.0 / k] * k for k in game.action_counts]
    else:
        x = [list(map(float, xi)) for xi in strategies]
    if aspirations is None:
        rho = [game.utility(i, prof) for i in range(n)]
    else:
        rho = [float(r) for r in aspirations]

    u_nom = [game.utility(i, prof) for i in range(n)]
    eps = params.epsilon
    en = params.epsilon * params.nu_value
    h, c = params.h, params.c
    apla = params.mode == MODE_APLA

    x_paths = [[list(xi)] for xi in x]
    rho_path = [list(rho)]
    meas = np.empty((horizon, n))

    # same canonical per-entry arithmetic as the stepping engine
    for t in range(horizon):
        for i in range(n):
            m = u_nom[i] + noise_values[t, i]
            g = m - rho[i]
            if apla:
                phi = m if g >= 0.0 else max(h, m + c * g)
            else:
                phi = m
            f = eps * phi
            xi = x[i]
            a = prof[i]
            s = 0.0
            for j in range(len(xi)):
                if j == a:
                    xj = xi[j] + f * (1.0 - xi[j])
                else:
                    xj = xi[j] - f * xi[j]
                xi[j] = xj
                s += xj
            if abs(s - 1.0) > 1e-15:
                for j in range(len(xi)):
                    xi[j] /= s
            rho[i] = rho[i] + en * g
            meas[t, i] = m
        for i in range(n):
            x_paths[i].append(list(x[i]))
        rho_path.append(list(rho))

    return ConstantActionRun(
        profile=prof,
        strategies=tuple(np.asarray(p, dtype=float) for p in x_paths),
        aspirations=np.asarray(rho_path, dtype=float),
        measurements=meas,
    )
