from dataclasses import replace

import numpy as np
import pytest

from apla_lab.analysis import (
    ClosedFormInputs,
    aspiration_envelope,
    aspiration_envelope_path,
    closed_form_strategy,
    closed_form_strategy_path,
    constant_action_run,
    enumerate_pss,
    in_neighborhood,
    nearest_pss,
    pure_strategy_state,
    strategy_distance,
)
from apla_lab.dynamics import LearnerParams, SimState
from apla_lab.games import GameSpec, NoiseModel

from oracles import aspiration_factor_sequence, chosen_entry_recursion, random_game, random_validated_params


class TestEnumeratePss:
    def test_two_by_two_has_four_states(self, stag):
        states = enumerate_pss(stag)
        assert len(states) == 4
        assert [s.label for s in states] == ["(A,A)", "(B,A)", "(A,B)", "(B,B)"]

    def test_aspirations_equal_nominal_utilities(self, stag):
        state = enumerate_pss(stag)[0]
        assert state.profile == (0, 0)
        assert np.array_equal(state.aspirations, [5.0, 5.0])
        assert np.array_equal(state.strategies[0], [1.0, 0.0])

    def test_three_player_two_action_game(self):
        game = GameSpec(
            action_counts=(2, 2, 2),
            utilities=tuple(np.full((2, 2, 2), 1.0 + i) for i in range(3)),
        )
        states = enumerate_pss(game)
        assert len(states) == 8
        assert [s.index for s in states] == list(range(8))

    def test_vertices_are_exact(self, stag):
        for s in enumerate_pss(stag):
            for i, a in enumerate(s.profile):
                assert s.strategies[i][a] == 1.0
                assert s.strategies[i].sum() == 1.0


class TestInNeighborhood:
    def test_pss_in_own_neighborhood_for_any_delta(self, stag):
        s = pure_strategy_state(stag, (0, 0))
        state = s.as_state()
        for delta in (1e-9, 0.05, 2.0):
            assert in_neighborhood(state, s, delta)

    def test_boundary_excluded(self, stag):
        s = pure_strategy_state(stag, (0, 0))
        x0 = np.array([0.96, 0.04])
        state = SimState(
            profile=(0, 0),
            strategies=(x0, s.strategies[1]),
            aspirations=s.aspirations,
            last_noise=np.zeros(2),
        )
        dist = strategy_distance(state, s)
        assert in_neighborhood(state, s, dist * 1.0001)
        assert not in_neighborhood(state, s, dist)  # strict inequality
        assert not in_neighborhood(state, s, dist * 0.9999)

    def test_profile_mismatch_fails_regardless(self, stag):
        s = pure_strategy_state(stag, (0, 0))
        other = pure_strategy_state(stag, (1, 0)).as_state()
        assert not in_neighborhood(other, s, 100.0)

    def test_aspiration_condition(self, stag):
        s = pure_strategy_state(stag, (0, 0))
        state = SimState(
            profile=(0, 0),
            strategies=s.strategies,
            aspirations=np.array([5.0, 4.9]),
            last_noise=np.zeros(2),
        )
        assert in_neighborhood(state, s, 0.2)
        assert not in_neighborhood(state, s, 0.05)

    def test_delta_must_be_positive(self, stag):
        s = pure_strategy_state(stag, (0, 0))
        with pytest.raises(ValueError, match="delta"):
            in_neighborhood(s.as_state(), s, 0.0)

    def test_each_pss_in_exactly_one_neighborhood(self, stag):
        states = enumerate_pss(stag)
        for delta in (0.05, 0.5, 1.0):
            for s in states:
                hits = [t.label for t in states if in_neighborhood(s.as_state(), t, delta)]
                assert hits == [s.label]


class TestNearestPss:
    def test_exact_pss_distance_zero(self, stag):
        s = pure_strategy_state(stag, (1, 1))
        found, dist = nearest_pss(s.as_state(), stag)
        assert found.profile == (1, 1)
        assert dist == 0.0

    def test_uniform_strategies_distance(self, stag):
        # uniform 2x2 strategies sit at distance 1 from each same-action
        # vertex block: sqrt(2 * (1/2)^2 * 2)
        state = SimState(
            profile=(0, 0),
            strategies=(np.array([0.5, 0.5]), np.array([0.5, 0.5])),
            aspirations=np.array([5.0, 5.0]),
            last_noise=np.zeros(2),
        )
        found, dist = nearest_pss(state, stag)
        assert found.profile == (0, 0)
        assert dist == pytest.approx(1.0, abs=1e-12)

    def test_distance_continuous_under_perturbation(self, stag):
        base = pure_strategy_state(stag, (0, 0))
        for eps in (1e-6, 1e-4, 1e-2):
            state = SimState(
                profile=(0, 0),
                strategies=(np.array([1.0 - eps, eps]), base.strategies[1]),
                aspirations=base.aspirations,
                last_noise=np.zeros(2),
            )
            _, dist = nearest_pss(state, stag)
            assert dist == pytest.approx(eps * np.sqrt(2), rel=1e-9)


def _demo_inputs(game, params, x0=0.3, rho0=1.0, profile=(0, 0), player=0):
    return ClosedFormInputs(
        game=game, params=params, player=player, profile=profile, x0=x0, rho0=rho0
    )


class TestClosedFormStrategy:
    def test_t_zero_returns_x0(self, stag, demo_params):
        inputs = _demo_inputs(stag, demo_params)
        assert closed_form_strategy(inputs, [], 0) == 0.3

    def test_negative_t_rejected(self, stag, demo_params):
        inputs = _demo_inputs(stag, demo_params)
        with pytest.raises(ValueError, match="t must be"):
            closed_form_strategy(inputs, [], -1)

    def test_noise_free_constant_aspiration_is_geometric(self, stag):
        # aspiration pinned at the utility: the factor is constant and the
        # path is the plain geometric approach 1 - (1-x0)*(1-eps*u)^t
        params = LearnerParams(epsilon=0.06, h=0.04, noise=NoiseModel(0.0), seed=1)
        inputs = _demo_inputs(stag, params, x0=0.1, rho0=5.0)
        rho_path = [5.0] * 200
        for t in (1, 5, 50, 200):
            expected = 1.0 - 0.9 * (1.0 - 0.06 * 5.0) ** t
            assert closed_form_strategy(inputs, rho_path, t) == pytest.approx(expected, rel=1e-12)

    def test_matches_recursion_and_simulation(self, stag):
        rng = np.random.default_rng(11)
        for trial in range(25):
            game = random_game(rng, max_players=2)
            params = random_validated_params(rng, game, mode="apla" if trial % 2 else "pla")
            profile = tuple(int(rng.integers(k)) for k in game.action_counts)
            player = int(rng.integers(game.num_players))
            x0 = float(rng.uniform(0.0, 0.95))
            rho0 = float(rng.uniform(0.5, 5.0))
            horizon = 2_000

            k = game.action_counts[player]
            chosen = profile[player]
            rest = (1.0 - x0) / (k - 1) if k > 1 else 0.0
            strategies = [
                [x0 if j == chosen else rest for j in range(k)]
                if i == player
                else [1.0 / game.action_counts[i]] * game.action_counts[i]
                for i in range(game.num_players)
            ]
            aspirations = [
                rho0 if i == player else game.utility(i, profile)
                for i in range(game.num_players)
            ]
            sim = constant_action_run(
                game, params, profile, horizon,
                strategies=strategies, aspirations=aspirations,
            )
            inputs = ClosedFormInputs(
                game=game, params=params, player=player, profile=profile,
                x0=x0, rho0=rho0,
            )
            closed = closed_form_strategy_path(
                inputs, horizon,
                rho_path=sim.aspirations[:horizon, player],
                measured_path=sim.measurements[:, player],
            )
            iterated = sim.strategies[player][:, chosen]
            np.testing.assert_allclose(closed, iterated, rtol=1e-10)

            # second, independent oracle: the inductive recursion
            phis = aspiration_factor_sequence(
                params, sim.measurements[:, player], sim.aspirations[:horizon, player]
            )
            recursed = chosen_entry_recursion(x0, phis, params.epsilon)
            np.testing.assert_allclose(closed, recursed, rtol=1e-10)

    def test_monotone_approach_to_one_without_noise(self, stag):
        params = LearnerParams(epsilon=0.06, h=0.04, c=10.0, noise=NoiseModel(0.0), seed=2)
        sim = constant_action_run(stag, params, (0, 0), 2_000,
                                  aspirations=[1.0, 5.0],
                                  strategies=[[0.5, 0.5], [0.5, 0.5]])
        path = sim.strategies[0][:, 0]
        assert np.all(np.diff(path) >= -1e-15)
        assert path[-1] > 0.999999


class TestAspirationEnvelope:
    def test_zero_noise_collapses_to_exact_decay(self):
        for t in (1, 10, 500):
            lower, upper = aspiration_envelope(4.0, 0.0, 0.06, 0.06, t)
            expected = -((1.0 - 0.0036) ** t) * 4.0
            assert lower == upper == pytest.approx(expected, rel=1e-12)

    def test_zero_noise_bounds_vanish_for_large_t(self):
        lower, upper = aspiration_envelope(4.0, 0.0, 0.06, 0.06, 50_000)
        assert abs(lower) < 1e-12
        assert abs(upper) < 1e-12

    def test_requires_positive_t(self):
        with pytest.raises(ValueError, match="t must be"):
            aspiration_envelope(1.0, 0.02, 0.06, 0.06, 0)

    def test_noisy_paths_stay_inside(self, stag, demo_params):
        # mini version of the acceptance sweep: every noisy constant-action
        # aspiration path lies inside the envelope
        u = stag.utility(0, (0, 0))
        for seed in range(100):
            params = replace(demo_params, lam=0.0, seed=seed)
            rho0 = 1.0 + 4.0 * (seed / 100)
            sim = constant_action_run(stag, params, (0, 0), 500,
                                      aspirations=[rho0, 5.0])
            t, lower, upper = aspiration_envelope_path(
                u - rho0, params.noise.bound, params.epsilon, params.nu_value, 500
            )
            offset = sim.aspirations[1:, 0] - u
            assert np.all(offset >= lower - 1e-12)
            assert np.all(offset <= upper + 1e-12)

    def test_first_step_bounds_are_tight(self):
        # at t=1 the envelope equals the one-step reachable interval
        eps, nu, bound, gap = 0.06, 0.06, 0.02, 2.0
        lower, upper = aspiration_envelope(gap, bound, eps, nu, 1)
        en = eps * nu
        assert lower == pytest.approx(-(1 - en) * gap - en * bound, abs=1e-15)
        assert upper == pytest.approx(-(1 - en) * gap + en * bound, abs=1e-15)


class TestConstantActionRun:
    def test_deterministic_for_seed(self, stag, demo_params):
        a = constant_action_run(stag, demo_params, (0, 0), 100)
        b = constant_action_run(stag, demo_params, (0, 0), 100)
        assert np.array_equal(a.measurements, b.measurements)
        assert np.array_equal(a.aspirations, b.aspirations)

    def test_measurement_bound(self, stag, demo_params):
        sim = constant_action_run(stag, demo_params, (1, 0), 500)
        for i in range(2):
            u = stag.utility(i, (1, 0))
            assert np.all(np.abs(sim.measurements[:, i] - u) <= demo_params.noise.bound)

    def test_explicit_noise_values(self, stag, demo_params):
        noise = np.zeros((50, 2))
        sim = constant_action_run(stag, demo_params, (0, 0), 50, noise_values=noise)
        assert np.all(sim.measurements[:, 0] == 5.0)

    def test_shape_validation(self, stag, demo_params):
        with pytest.raises(ValueError, match="shape"):
            constant_action_run(stag, demo_params, (0, 0), 50, noise_values=np.zeros((10, 2)))
