from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from apla_lab.analysis import pure_strategy_state
from apla_lab.dynamics import LearnerParams
from apla_lab.games import GameSpec, NoiseModel
from apla_lab.rng import StreamSet
from apla_lab.stability import (
    EstimationQualityError,
    ReducibleChainError,
    chain_from_dict,
    communicating_classes,
    estimate_chain,
    estimate_chain_row,
    estimate_occupancy,
    stationary,
    sweep_lambda,
    total_variation,
    tremble_once,
)


@pytest.fixture(scope="module")
def pla_mild_params():
    return LearnerParams(
        epsilon=0.06, lam=0.04, nu=0.06, h=0.04, c=10.0,
        noise=NoiseModel(0.02), mode="pla", seed=314_159,
    )


@pytest.fixture(scope="module")
def single_action_game():
    return GameSpec(action_counts=(1,), utilities=(np.array([2.0]),))


class TestTrembleOnce:
    def test_single_action_game_returns_to_unique_profile(self, single_action_game):
        params = LearnerParams(epsilon=0.1, h=0.04, noise=NoiseModel(0.01), seed=4)
        pss = pure_strategy_state(single_action_game, (0,))
        out = tremble_once(pss, single_action_game, params, StreamSet.for_run(4, 1))
        assert out.profile == (0,)
        assert np.array_equal(out.strategies[0], [1.0])

    def test_agent_and_action_frequencies(self, mild_stag, pla_mild_params):
        # visible outcomes from a vertex state: the joint profile reveals the
        # displacing trembles; same-action trembles leave it unchanged.
        # expected masses: unchanged 1/2, each displacing (agent, action) 1/4
        pss = pure_strategy_state(mild_stag, (0, 0))
        counts = {None: 0, 0: 0, 1: 0}
        n = 40_000
        for k in range(n):
            out = tremble_once(pss, mild_stag, pla_mild_params, StreamSet.for_run(k, 2))
            if out.profile == (0, 0):
                counts[None] += 1
            elif out.profile == (1, 0):
                counts[0] += 1
            else:
                assert out.profile == (0, 1)
                counts[1] += 1
        observed = [counts[None], counts[0], counts[1]]
        expected = [n / 2, n / 4, n / 4]
        assert stats.chisquare(observed, expected).pvalue > 0.01

    def test_trembled_strategy_moves_toward_played_action(self, stag, demo_params):
        pss = pure_strategy_state(stag, (0, 0))
        for seed in range(30):
            out = tremble_once(pss, stag, demo_params, StreamSet.for_run(seed, 2))
            for i in range(2):
                a = out.profile[i]
                if a != 0:
                    assert out.strategies[i][a] > 0.0
                    assert out.strategies[i][0] < 1.0


class TestEstimateChainRow:
    def test_single_action_row_is_one(self, single_action_game):
        params = LearnerParams(epsilon=0.1, h=0.04, noise=NoiseModel(0.01), seed=6)
        pss = pure_strategy_state(single_action_game, (0,))
        row = estimate_chain_row(pss, single_action_game, params, 0.05, 200, 100)
        assert np.array_equal(row.probabilities, [1.0])
        assert row.unresolved == 0

    def test_rows_sum_to_one_over_resolved(self, mild_stag, pla_mild_params):
        pss = pure_strategy_state(mild_stag, (1, 1))
        row = estimate_chain_row(pss, mild_stag, pla_mild_params, 0.05, 400, 10_000)
        assert abs(row.probabilities.sum() - 1.0) < 1e-12
        assert row.counts.sum() + row.unresolved == 400

    def test_deterministic_and_thread_invariant(self, mild_stag, pla_mild_params):
        pss = pure_strategy_state(mild_stag, (0, 0))
        a = estimate_chain_row(pss, mild_stag, pla_mild_params, 0.05, 600, 10_000)
        b = estimate_chain_row(pss, mild_stag, pla_mild_params, 0.05, 600, 10_000)
        c = estimate_chain_row(
            pss, mild_stag, pla_mild_params, 0.05, 600, 10_000, threads=4
        )
        assert np.array_equal(a.counts, b.counts)
        assert np.array_equal(a.counts, c.counts)

    def test_delta_must_exceed_noise(self, mild_stag, pla_mild_params):
        pss = pure_strategy_state(mild_stag, (0, 0))
        with pytest.raises(ValueError, match="noise bound"):
            estimate_chain_row(pss, mild_stag, pla_mild_params, 0.01, 10, 10)

    def test_unresolved_above_threshold_raises(self, mild_stag, pla_mild_params):
        # a two-step cap leaves displaced trembles unresolved
        pss = pure_strategy_state(mild_stag, (0, 0))
        with pytest.raises(EstimationQualityError, match="increase t_max"):
            estimate_chain_row(pss, mild_stag, pla_mild_params, 0.05, 200, 2)

    def test_self_consistency_against_larger_sample(self, mild_stag, pla_mild_params):
        # row estimates at two sample counts agree within 3 combined
        # Monte-Carlo standard errors per entry
        pss = pure_strategy_state(mild_stag, (0, 0))
        small = estimate_chain_row(pss, mild_stag, pla_mild_params, 0.05, 4_000, 10_000)
        big = estimate_chain_row(
            pss, mild_stag, replace(pla_mild_params, seed=951_413), 0.05, 20_000, 10_000
        )
        for p_small, p_big in zip(small.probabilities, big.probabilities):
            p = (p_small * 4_000 + p_big * 20_000) / 24_000
            se = np.sqrt(max(p * (1 - p), 1e-12) * (1 / 4_000 + 1 / 20_000))
            assert abs(p_small - p_big) <= 3 * se + 1e-12


@pytest.fixture(scope="module")
def chain(mild_stag, pla_mild_params):
    return estimate_chain(mild_stag, pla_mild_params, 0.05, 800, 10_000)


class TestEstimateChain:
    def test_shape_and_row_sums(self, chain):
        assert chain.matrix.shape == (4, 4)
        assert np.all(np.abs(chain.matrix.sum(axis=1) - 1.0) < 1e-12)
        assert np.all(chain.matrix >= 0.0)
        assert np.all(chain.matrix <= 1.0)

    def test_diagonal_positive(self, chain):
        assert np.all(np.diag(chain.matrix) > 0.0)

    def test_deterministic(self, chain, mild_stag, pla_mild_params):
        again = estimate_chain(mild_stag, pla_mild_params, 0.05, 800, 10_000)
        assert np.array_equal(chain.counts, again.counts)

    def test_unresolved_is_tracked(self, chain):
        assert chain.unresolved.shape == (4,)
        assert np.all(chain.unresolved <= 0.01)

    def test_dict_round_trip(self, chain, mild_stag):
        again = chain_from_dict(chain.to_dict(), mild_stag)
        assert np.array_equal(again.matrix, chain.matrix)
        assert again.labels == chain.labels
        assert again.seed == chain.seed


class TestStationary:
    def test_symmetric_two_state(self):
        pi = stationary(np.array([[0.7, 0.3], [0.3, 0.7]]))
        assert pi.weights == pytest.approx([0.5, 0.5], abs=1e-12)

    def test_hand_balance_case(self):
        pi = stationary(np.array([[0.9, 0.1], [0.3, 0.7]]))
        assert pi.weights == pytest.approx([0.75, 0.25], abs=1e-10)
        assert pi.residual < 1e-10

    def test_identity_is_reducible(self):
        with pytest.raises(ReducibleChainError) as err:
            stationary(np.eye(2))
        assert err.value.classes == [[0], [1]]

    def test_periodic_chain_handled(self):
        pi = stationary(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert pi.weights == pytest.approx([0.5, 0.5], abs=1e-10)

    def test_power_and_direct_agree(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            n = int(rng.integers(2, 8))
            matrix = rng.dirichlet(np.ones(n) * 0.5, size=n) + 1e-6
            matrix /= matrix.sum(axis=1, keepdims=True)
            power = stationary(matrix, method="power")
            direct = stationary(matrix, method="direct")
            assert total_variation(power.weights, direct.weights) < 1e-8
            assert power.residual < 1e-10

    def test_reducible_block_structure_reported(self):
        matrix = np.array([
            [0.5, 0.5, 0.0],
            [0.5, 0.5, 0.0],
            [0.0, 0.0, 1.0],
        ])
        with pytest.raises(ReducibleChainError) as err:
            stationary(matrix)
        assert sorted(map(sorted, err.value.classes)) == [[0, 1], [2]]

    def test_rejects_non_stochastic(self):
        with pytest.raises(ValueError, match="probability"):
            stationary(np.array([[0.5, 0.6], [0.5, 0.5]]))


def test_communicating_classes_full_cycle():
    matrix = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    assert communicating_classes(matrix) == [[0, 1, 2]]


class TestTotalVariation:
    def test_identical(self):
        assert total_variation([0.3, 0.7], [0.3, 0.7]) == 0.0

    def test_disjoint(self):
        assert total_variation([1.0, 0.0], [0.0, 1.0]) == 1.0

    def test_hand_case(self):
        assert total_variation([0.75, 0.25], [0.5, 0.5]) == pytest.approx(0.25, abs=1e-15)


class TestEstimateOccupancy:
    def test_fractions_sum_to_one(self, stag, demo_params):
        occ = estimate_occupancy(stag, demo_params, 5_000, 500, 0.05)
        assert abs(occ.fractions.sum() + occ.unclassified - 1.0) < 1e-12

    def test_deterministic(self, stag, demo_params):
        a = estimate_occupancy(stag, demo_params, 5_000, 500, 0.05)
        b = estimate_occupancy(stag, demo_params, 5_000, 500, 0.05)
        assert np.array_equal(a.fractions, b.fractions)

    def test_requires_positive_tremble_rate(self, stag, demo_params):
        with pytest.raises(ValueError, match="tremble"):
            estimate_occupancy(stag, replace(demo_params, lam=0.0), 100, 0, 0.05)

    def test_aspiration_condition_tightens_classification(self, stag, demo_params):
        # with the aspiration radius enforced at delta, the tremble-induced
        # aspiration lag leaves essentially every step unclassified
        loose = estimate_occupancy(stag, demo_params, 20_000, 2_000, 0.05)
        tight = estimate_occupancy(stag, demo_params, 20_000, 2_000, 0.05, rho_delta=0.05)
        assert loose.fractions.sum() > 0.9
        assert tight.fractions.sum() < loose.fractions.sum()
        wide = estimate_occupancy(stag, demo_params, 20_000, 2_000, 0.05, rho_delta=1.0)
        assert wide.fractions.sum() == pytest.approx(loose.fractions.sum(), abs=0.02)

    def test_conditioned_normalizes(self, stag, demo_params):
        occ = estimate_occupancy(stag, demo_params, 5_000, 500, 0.05)
        assert occ.conditioned().sum() == pytest.approx(1.0, abs=1e-12)


class TestSweep:
    def test_small_sweep_structure(self, mild_stag, pla_mild_params):
        chain = estimate_chain(mild_stag, pla_mild_params, 0.05, 400, 10_000)
        result = sweep_lambda(
            mild_stag, pla_mild_params, [0.08, 0.02], 4_000, 400, 0.05, chain,
            n_seeds=3,
        )
        assert len(result.rows) == 6
        assert len(result.aggregates) == 2
        for agg in result.aggregates:
            assert 0.0 <= agg.mean_tv <= 1.0
            assert agg.se_tv >= 0.0

    def test_thread_invariance(self, mild_stag, pla_mild_params):
        chain = estimate_chain(mild_stag, pla_mild_params, 0.05, 300, 10_000)
        a = sweep_lambda(mild_stag, pla_mild_params, [0.05], 2_000, 200, 0.05,
                         chain, n_seeds=2)
        b = sweep_lambda(mild_stag, pla_mild_params, [0.05], 2_000, 200, 0.05,
                         chain, n_seeds=2, threads=4)
        assert [r.tv for r in a.rows] == [r.tv for r in b.rows]
