"""Independent reference implementations used only as test oracles.

These deliberately avoid the production engine: raw numpy generators are
derived straight from the documented stream layout, and the update rules
are transcribed line by line from their definitions.
"""

from __future__ import annotations

import numpy as np

from apla_lab.dynamics import LearnerParams, SimState
from apla_lab.games import GameSpec


def raw_streams(seed: int, n: int):
    agents = [
        np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, i)))
        for i in range(n)
    ]
    noise = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2,)))
    return agents, noise


def transcribed_step(state: SimState, game: GameSpec, params: LearnerParams, seed: int):
    """One synchronous iteration, written straight from the update rules."""
    n = game.num_players
    agent_gens, noise_gen = raw_streams(seed, n)
    lam = params.lam

    # stage 1: every agent picks an action (tremble coin, then index draw)
    actions = []
    for i in range(n):
        coin = agent_gens[i].random()
        draw = agent_gens[i].random()
        k = game.action_counts[i]
        if coin < lam:
            a = int(draw * k)
            if a == k:
                a = k - 1
        else:
            a = k - 1
            acc = 0.0
            for j in range(k):
                acc += float(state.strategies[i][j])
                if draw < acc:
                    a = j
                    break
        actions.append(a)

    # stage 2: each agent measures its utility at the new joint profile
    measurements = []
    for i in range(n):
        u = noise_gen.random()
        v = (2.0 * u - 1.0) * params.noise.bound
        measurements.append(game.utility(i, actions) + v)

    # stages 3 and 4: reinforcement scaled by the aspiration factor, then
    # the slow aspiration move
    en = params.epsilon * params.nu_value
    new_x = []
    new_rho = []
    for i in range(n):
        m = measurements[i]
        rho = float(state.aspirations[i])
        g = m - rho
        if params.mode == "apla":
            phi = m if g >= 0.0 else max(params.h, m + params.c * g)
        else:
            phi = m
        f = params.epsilon * phi
        xi = [float(v) for v in state.strategies[i]]
        a = actions[i]
        s = 0.0
        for j in range(len(xi)):
            if j == a:
                xi[j] = xi[j] + f * (1.0 - xi[j])
            else:
                xi[j] = xi[j] - f * xi[j]
            s += xi[j]
        if abs(s - 1.0) > 1e-15:
            xi = [v / s for v in xi]
        new_x.append(xi)
        new_rho.append(rho + en * g)
    return tuple(actions), new_x, new_rho, measurements


def chosen_entry_recursion(x0: float, factors: list[float], epsilon: float) -> list[float]:
    """Inductive form of the constant-action strategy evolution:
    x(t+1) = x(t) + epsilon*(1 - x(t))*phi(t)."""
    xs = [x0]
    x = x0
    for phi in factors:
        x = x + epsilon * (1.0 - x) * phi
        xs.append(x)
    return xs


def aspiration_factor_sequence(
    params: LearnerParams, measured: np.ndarray, rho_path: np.ndarray
) -> list[float]:
    """The phi value applied at each step of a constant-action run."""
    out = []
    for m, rho in zip(measured, rho_path):
        g = float(m) - float(rho)
        if params.mode == "apla":
            phi = float(m) if g >= 0.0 else max(params.h, float(m) + params.c * g)
        else:
            phi = float(m)
        out.append(phi)
    return out


def random_game(rng: np.random.Generator, max_players: int = 3, max_actions: int = 3) -> GameSpec:
    n = int(rng.integers(1, max_players + 1))
    counts = tuple(int(rng.integers(2, max_actions + 1)) for _ in range(n))
    utilities = tuple(rng.uniform(0.5, 5.0, size=counts) for _ in range(n))
    return GameSpec(action_counts=counts, utilities=utilities)


def random_validated_params(
    rng: np.random.Generator, game: GameSpec, mode: str = "apla"
) -> LearnerParams:
    from apla_lab.games import NoiseModel

    u_max = game.max_utility()
    u_min = game.min_utility()
    bound = float(rng.uniform(0.0, 0.2 * u_min))
    eps = float(rng.uniform(0.01, 0.9 / (u_max + bound)))
    h = float(rng.uniform(0.01, 0.8)) * (u_min - bound)
    c = float(rng.uniform(0.0, 12.0))
    return LearnerParams(
        epsilon=eps,
        lam=0.0,
        nu=None,
        h=h,
        c=c,
        noise=NoiseModel(bound),
        mode=mode,
        seed=int(rng.integers(0, 2**63)),
    )
