"""
Unit Tests for the Binary-Tree Q-Learning Experiment
"""

import numpy as np
import pandas as pd
import pytest

from src.toy.binary_tree import (
    BinaryTreeEnv,
    QLearner,
    ToySettings,
    aggregate_runs,
    final_scores,
    run_toy_experiment,
    toy_q_distance,
    toy_run,
)

FAST = ToySettings(iterations=200, eval_every=50, eval_games=100, buffer_capacity=16)


class TestBinaryTreeEnv:
    """Test suite for the tree environment."""

    def test_random_tree_has_one_optimal_leaf(self):
        """Test leaf count and the single p = 1 leaf."""
        env = BinaryTreeEnv.random(4, np.random.default_rng(0), suboptimal_max=0.5)
        assert env.leaf_probs.shape == (16,)
        assert np.count_nonzero(env.leaf_probs == 1.0) == 1
        assert np.all(env.leaf_probs[env.leaf_probs < 1.0] <= 0.5)
        assert env.num_internal == 15

    def test_heap_indexing(self):
        """Test children and leaf detection."""
        env = BinaryTreeEnv(2, [0.2, 0.4, 1.0, 0.1])
        assert env.child(0, 0) == 1 and env.child(0, 1) == 2
        assert env.child(2, 1) == 6
        assert not env.is_leaf(2) and env.is_leaf(3)
        assert env.leaf_prob(5) == 1.0

    def test_optimal_q(self):
        """Test backward induction with discounting."""
        env = BinaryTreeEnv(2, [0.2, 0.4, 1.0, 0.1])
        q = env.optimal_q(discount=0.1)
        np.testing.assert_allclose(q[1], [0.2, 0.4])
        np.testing.assert_allclose(q[2], [1.0, 0.1])
        np.testing.assert_allclose(q[0], [0.04, 0.1])

    def test_validation(self):
        """Test rejection of malformed trees."""
        with pytest.raises(ValueError):
            BinaryTreeEnv(2, [0.2, 0.4, 0.5, 0.1])
        with pytest.raises(ValueError):
            BinaryTreeEnv(2, [1.0, 1.0, 0.5, 0.1])
        with pytest.raises(ValueError):
            BinaryTreeEnv(2, [0.2, 1.0])
        with pytest.raises(ValueError):
            BinaryTreeEnv(0, [1.0])


class TestQLearner:
    """Test suite for the tabular learner."""

    @pytest.fixture
    def learner(self):
        env = BinaryTreeEnv(2, [0.2, 0.4, 1.0, 0.1])
        return QLearner(env, ToySettings(epsilon=0.0), np.random.default_rng(0))

    def test_episode_visits_one_node_per_level(self, learner):
        """Test the path of internal nodes from the root."""
        path = learner.episode(0)
        assert len(path) == 2
        assert path[0] == 0
        assert path[1] in (1, 2)
        assert learner.return_count[0].sum() == 1

    def test_episode_from_inner_node(self, learner):
        """Test that restarts begin below the root."""
        assert learner.episode(2) == [2]

    def test_node_regrets(self, learner):
        """Test |best mean return - best Q|, zero for unobserved nodes."""
        learner.q[1] = [0.1, 0.3]
        learner.return_sum[1] = [1.0, 0.0]
        learner.return_count[1] = [2, 0]
        regrets = learner.node_regrets(np.array([1, 2]))
        np.testing.assert_allclose(regrets, [0.2, 0.0])

    def test_greedy_tie_break_is_random(self, learner):
        """Test that equal Q values pick both actions."""
        picks = {learner.greedy(0) for _ in range(50)}
        assert picks == {0, 1}

    def test_learns_two_leaf_tree(self):
        """Test convergence to the p = 1 leaf."""
        env = BinaryTreeEnv(1, [0.2, 1.0])
        settings = ToySettings(iterations=500, eval_every=500, eval_games=100)
        df = toy_run('none', 1, seed=0, settings=settings, env=env)
        assert df['reward'].iloc[-1] == pytest.approx(1.0)
        assert df['q_distance'].iloc[-1] < 0.05

    @pytest.mark.parametrize('discount', [0.1, 0.9])
    def test_pure_exploration_converges_to_optimal_q(self, discount):
        """Test Q against backward induction on a deterministic 3-level tree."""
        env = BinaryTreeEnv(3, [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0])
        settings = ToySettings(epsilon=1.0, discount=discount, learning_rate=0.1)
        learner = QLearner(env, settings, np.random.default_rng(3))
        for _ in range(4000):
            learner.episode(0)
        assert learner.return_count.min() > 0
        np.testing.assert_allclose(learner.q, env.optimal_q(discount), atol=1e-3)


class TestToyRun:
    """Test suite for single runs and the full experiment."""

    def test_columns_and_eval_points(self):
        """Test one row per evaluation."""
        df = toy_run('regret', 3, seed=1, settings=FAST)
        assert list(df.columns) == ['iteration', 'reward', 'q_distance']
        assert df['iteration'].tolist() == [50, 100, 150, 200]
        assert df['reward'].between(0.0, 1.0).all()
        assert (df['q_distance'] >= 0).all()

    def test_seeded_runs_repeat(self):
        """Test reproducibility for every strategy."""
        for strategy in ('none', 'random', 'regret'):
            pd.testing.assert_frame_equal(toy_run(strategy, 3, 2, FAST), toy_run(strategy, 3, 2, FAST))

    def test_q_distance_view(self):
        """Test the q-distance projection of a run."""
        df = toy_q_distance('random', 3, 0, FAST)
        assert list(df.columns) == ['iteration', 'q_distance']

    def test_unknown_strategy(self):
        """Test rejection of unknown strategies."""
        with pytest.raises(ValueError):
            toy_run('greedy', 3, 0, FAST)

    @pytest.mark.slow
    def test_experiment_layout(self):
        """Test that every (strategy, levels, seed) run is present."""
        runs = run_toy_experiment([2, 3], seeds=2, settings=FAST)
        assert len(runs) == 3 * 2 * 2 * 4
        assert set(runs['strategy']) == {'none', 'random', 'regret'}
        counts = runs.groupby(['strategy', 'levels', 'seed']).size()
        assert (counts == 4).all()


@pytest.mark.slow
@pytest.mark.timeout(1800)
def test_full_protocol_ordering():
    """Test Regret > Random > None on 5- and 6-level trees over 25 seeds."""
    runs = run_toy_experiment([5, 6], seeds=25, settings=ToySettings(), n_jobs=-1)
    final = final_scores(runs, final_points=10).set_index(['levels', 'strategy'])
    for levels in (5, 6):
        regret = final.loc[(levels, 'regret')]
        random = final.loc[(levels, 'random')]
        none = final.loc[(levels, 'none')]
        assert regret['final_reward'] > random['final_reward'] > none['final_reward']
        # paired-seed interval of Regret - None excludes zero
        assert regret['diff_low'] > 0


class TestSummaries:
    """Test suite for aggregation across seeds."""

    @pytest.fixture
    def runs(self):
        rows = []
        for strategy, offset in (('none', 0.0), ('regret', 0.2)):
            for seed in range(3):
                for iteration in (10, 20):
                    rows.append({'strategy': strategy, 'levels': 5, 'seed': seed,
                                 'iteration': iteration,
                                 'reward': 0.5 + offset + 0.1 * seed,
                                 'q_distance': 0.1})
        return pd.DataFrame(rows)

    def test_aggregate(self, runs):
        """Test per-iteration means and intervals."""
        agg = aggregate_runs(runs)
        assert len(agg) == 4
        row = agg[(agg['strategy'] == 'regret') & (agg['iteration'] == 20)].iloc[0]
        assert row['seeds'] == 3
        assert row['reward_mean'] == pytest.approx(0.8)
        assert row['reward_low'] < 0.8 < row['reward_high']
        # constant metric collapses the interval
        assert row['q_distance_low'] == pytest.approx(row['q_distance_high'])

    def test_final_scores_paired_difference(self, runs):
        """Test the final reward and the paired-seed gain over the baseline."""
        final = final_scores(runs, final_points=1)
        regret = final[final['strategy'] == 'regret'].iloc[0]
        assert regret['final_reward'] == pytest.approx(0.8)
        assert regret['diff_vs_baseline'] == pytest.approx(0.2)
        none = final[final['strategy'] == 'none'].iloc[0]
        assert none['diff_vs_baseline'] == pytest.approx(0.0)


if __name__ == "__main__":
    """Run tests from command line."""
    pytest.main([__file__, "-v"])
