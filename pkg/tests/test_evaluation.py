"""
Unit Tests for Matches, Elo Ratings, Regret Diagnostics and Figures
"""

import numpy as np
import pandas as pd
import pytest

from src.evaluation.analysis import (
    analyze_opening_lengths,
    analyze_prb_shift,
    analyze_selected_regret,
    collect_evictions,
    load_buffer_snapshots,
    selected_regret_row,
    track_opening_regret,
)
from src.evaluation.elo import compute_elo
from src.evaluation.match import (
    RANDOM_PLAYER,
    EvaluationError,
    MatchResult,
    play_match,
)
from src.evaluation.plots import (
    plot_losses,
    plot_opening_lengths,
    plot_regret_shift,
    plot_toy_curves,
)
from src.games import make_game
from src.training.run_config import RunConfig
from src.training.trainer import GAMES_FILE, METRICS_FILE, Trainer


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    """A two-iteration rgsc run on 3x3 Hex."""
    run_dir = tmp_path_factory.mktemp("runs") / "rgsc"
    cfg = RunConfig().with_overrides({
        'run.iterations': 2, 'run.states_per_iteration': 12,
        'run.optimization_steps_per_iteration': 2, 'run.batch_size': 8,
        'run.workers': 1, 'run.freeze_steps': 2, 'run.freeze_games': 4,
        'run.output_dir': str(run_dir), 'game.size': 3, 'network.torso': 'mlp',
        'network.hidden': 8, 'network.head_hidden': 4, 'mcts.simulations': 4,
        'restart.capacity': 3,
    })
    return Trainer(cfg).run()


class TestMatch:
    """Test suite for head-to-head matches."""

    def test_random_players_on_hex(self):
        """Test paired colours and that Hex never draws."""
        result = play_match(RANDOM_PLAYER, RANDOM_PLAYER, games=6, game=make_game('hex', 3))
        assert result.games == 6
        assert result.draws == 0
        assert result.wins + result.losses == 6
        assert [g['a_first'] for g in result.games_log] == [True, False] * 3
        split = result.color_split()
        assert split['wins_first'] + split['wins_second'] == result.wins

    def test_seeded_matches_repeat(self):
        """Test that the seed fixes every move, whatever the thread count."""
        game = make_game('hex', 3)
        one = play_match(RANDOM_PLAYER, RANDOM_PLAYER, games=4, seed=3, game=game)
        two = play_match(RANDOM_PLAYER, RANDOM_PLAYER, games=4, seed=3, game=game, workers=2)
        assert one.games_log == two.games_log

    def test_checkpoint_against_random(self, tiny_run):
        """Test that a checkpoint brings its own game."""
        result = play_match(tiny_run / "ckpt_2", RANDOM_PLAYER, games=2, simulations=2)
        assert result.games == 2
        assert result.player_b == RANDOM_PLAYER

    def test_game_required_and_checked(self, tiny_run):
        """Test the errors for a missing or mismatched game."""
        with pytest.raises(EvaluationError):
            play_match(RANDOM_PLAYER, RANDOM_PLAYER, games=2)
        with pytest.raises(EvaluationError):
            play_match(tiny_run / "ckpt_2", RANDOM_PLAYER, games=2, game=make_game('othello', 4))

    def test_counts_and_interval(self):
        """Test win rate, the clipped interval and the swapped view."""
        result = MatchResult.from_counts('a', 'b', wins=6, draws=2, losses=2)
        assert result.win_rate == pytest.approx(0.7)
        low, high = result.confidence_interval()
        assert 0.0 <= low < 0.7 < high <= 1.0
        swapped = result.swapped()
        assert (swapped.wins, swapped.draws, swapped.losses) == (2, 2, 6)
        assert swapped.win_rate == pytest.approx(0.3)
        summary = result.summary()
        assert summary['games'] == 10 and summary['ci_low'] == pytest.approx(low)

    def test_perfect_score_interval(self):
        """Test that a 100% score does not leave [0, 1]."""
        low, high = MatchResult.from_counts('a', 'b', 4, 0, 0).confidence_interval()
        assert high == 1.0 and low == 1.0


class TestElo:
    """Test suite for compute_elo()."""

    def test_two_players(self):
        """Test that a 75% score is 400 * log10(3) points."""
        table = compute_elo([MatchResult.from_counts('new', 'base', 3, 0, 1)], anchor='base')
        assert table.ratings['base'] == 1000.0
        assert table.ratings['new'] == pytest.approx(1000.0 + 400 * np.log10(3), abs=1e-4)
        assert table.expected_score('new', 'base') == pytest.approx(0.75)
        frame = table.to_frame()
        assert frame['player'].tolist() == ['new', 'base']
        assert frame['games'].tolist() == [4, 4]

    def test_chain_of_results(self):
        """Test that ratings propagate through an intermediate player."""
        results = [MatchResult.from_counts('b', 'a', 1, 2, 1),
                   MatchResult.from_counts('c', 'b', 3, 0, 1)]
        table = compute_elo(results, anchor='a', anchor_rating=0.0)
        assert table.ratings['b'] == pytest.approx(0.0, abs=1e-4)
        assert table.ratings['c'] == pytest.approx(400 * np.log10(3), abs=1e-4)

    def test_orientation_does_not_matter(self):
        """Test that a swapped result gives the same ratings."""
        result = MatchResult.from_counts('x', 'y', 5, 1, 2)
        one = compute_elo([result], anchor='y')
        two = compute_elo([result.swapped()], anchor='y')
        assert one.ratings['x'] == pytest.approx(two.ratings['x'])

    def test_errors(self):
        """Test missing anchor, disconnected players and a perfect score."""
        results = [MatchResult.from_counts('a', 'b', 1, 0, 1),
                   MatchResult.from_counts('c', 'd', 1, 0, 1)]
        with pytest.raises(EvaluationError, match="not connected"):
            compute_elo(results, anchor='a')
        with pytest.raises(EvaluationError):
            compute_elo(results, anchor='z')
        with pytest.raises(EvaluationError, match="unbounded"):
            compute_elo([MatchResult.from_counts('a', 'b', 4, 0, 0)], anchor='b')

    def test_prior_games_bound_a_perfect_score(self):
        """Test that virtual draws give a finite rating for a clean sweep."""
        table = compute_elo([MatchResult.from_counts('a', 'b', 4, 0, 0)], anchor='b',
                            prior_games=2)
        # 5 points out of 6
        assert table.ratings['a'] == pytest.approx(1000.0 + 400 * np.log10(5), abs=1e-4)
        assert table.games['a'] == 4


class TestSelectedRegret:
    """Test suite for the selected-regret analysis."""

    def test_row_from_known_scores(self):
        """Test top-n means of each head against a uniform sample."""
        regrets = np.array([0.0, 0.1, 0.2, 0.9, 1.0])
        gamma = np.array([0.0, 0.1, 0.2, 5.0, 4.0])
        value = np.array([3.0, 2.0, 1.0, 0.0, 0.0])
        row = selected_regret_row(gamma, value, regrets, 2, np.random.default_rng(0), resamples=200)
        assert row['ranking_top_regret'] == pytest.approx(0.95)
        assert row['value_top_regret'] == pytest.approx(0.05)
        assert row['global_mean_regret'] == pytest.approx(0.44)
        assert row['uniform_ci_low'] <= row['uniform_regret'] <= row['uniform_ci_high']
        assert not row['truncated']

    def test_truncated_sample(self):
        """Test that asking for more states than exist uses them all."""
        regrets = np.array([0.2, 0.4, 0.6])
        row = selected_regret_row(regrets, regrets, regrets, 10, np.random.default_rng(0))
        assert row['used_n'] == 3 and row['truncated']
        assert row['uniform_regret'] == pytest.approx(0.4)

    def test_over_a_run(self, tiny_run):
        """Test one row per checkpoint over the logged games."""
        df = analyze_selected_regret(tiny_run / GAMES_FILE,
                                     [tiny_run / "ckpt_1", tiny_run / "ckpt_2"],
                                     top_n=5, resamples=100)
        assert df['iteration'].tolist() == [1, 2]
        assert (df['ranking_top_regret'] >= 0).all()
        assert (df['used_n'] == 5).all()

    def test_missing_games(self, tmp_path, tiny_run):
        """Test the error for an empty game log."""
        path = tmp_path / "games.jsonl"
        path.write_bytes(b"")
        with pytest.raises(EvaluationError):
            analyze_selected_regret(path, [tiny_run / "ckpt_2"])


def eviction(entry_id, first, final):
    return {'entry_id': entry_id, 'first_regret': first, 'final_regret': final,
            'history': [first, final]}


class TestBufferAnalyses:
    """Test suite for buffer snapshot analyses."""

    @pytest.fixture
    def snapshots(self):
        def snap(lengths, evictions=()):
            return {'game_id': 'hex3', 'entries': [
                {'entry_id': i, 'opening_move_count': n, 'history': [0.5, 0.4 - 0.1 * i]}
                for i, n in enumerate(lengths)
            ], 'evictions': list(evictions)}
        return [(1, 0, snap([0, 1, 6])), (2, 0, snap([7, 8], [eviction(9, 1.0, 0.2)]))]

    def test_snapshots_of_a_run(self, tiny_run):
        """Test that every checkpoint's buffers are found in order."""
        found = load_buffer_snapshots(tiny_run)
        assert [(k, w) for k, w, _ in found] == [(0, 0), (1, 0), (2, 0)]
        assert all(dump['variant'] == 'prb' for _, _, dump in found)
        assert isinstance(collect_evictions(tiny_run), list)

    def test_prb_shift(self):
        """Test histograms and the pass flag."""
        evictions = [eviction(i, 1.0 + i, 0.1 * i) for i in range(4)]
        histogram, summary = analyze_prb_shift(evictions, bins=4)
        assert len(histogram) == 4
        assert histogram['first_count'].sum() == 4
        assert histogram['final_count'].sum() == 4
        assert histogram['bin_high'].iloc[-1] == pytest.approx(4.0)
        assert summary['passed'] and summary['evicted'] == 4
        assert summary['mean_first'] == pytest.approx(2.5)
        with pytest.raises(EvaluationError):
            analyze_prb_shift([])

    def test_opening_lengths(self, snapshots):
        """Test bucket proportions per iteration."""
        df = analyze_opening_lengths(snapshots, bucket_width=5)
        assert df['bucket_low'].unique().tolist() == [0, 5]
        first = df[df['iteration'] == 1]
        assert first['count'].tolist() == [2, 1]
        assert first['proportion'].sum() == pytest.approx(1.0)
        assert df[df['iteration'] == 2]['count'].tolist() == [0, 2]
        with pytest.raises(EvaluationError):
            analyze_opening_lengths(snapshots[:1])

    def test_track_entry(self, snapshots):
        """Test per-update regret for live and evicted entries."""
        live = track_opening_regret(snapshots, entry_id=1)
        assert live['regret'].tolist() == pytest.approx([0.5, 0.3])
        gone = track_opening_regret(snapshots, entry_id=9)
        assert gone['update'].tolist() == [0, 1]
        with pytest.raises(EvaluationError):
            track_opening_regret(snapshots, entry_id=1, worker=3)


class TestPlots:
    """Test suite for figure rendering."""

    def test_every_figure_writes_png(self, tmp_path, tiny_run):
        """Test that each plot produces a file."""
        metrics = pd.read_csv(tiny_run / METRICS_FILE)
        toy = pd.DataFrame({
            'strategy': ['none', 'none', 'regret', 'regret'], 'levels': [5] * 4,
            'iteration': [10, 20, 10, 20],
            'reward_mean': [0.5, 0.6, 0.5, 0.7], 'reward_low': [0.4] * 4, 'reward_high': [0.8] * 4,
            'q_distance_mean': [0.2] * 4, 'q_distance_low': [0.1] * 4, 'q_distance_high': [0.3] * 4,
        })
        histogram, _ = analyze_prb_shift([eviction(0, 1.0, 0.5)], bins=3)
        openings = pd.DataFrame({'iteration': [1, 1, 2, 2], 'bucket_low': [0, 5, 0, 5],
                                 'bucket_high': [4, 9, 4, 9], 'count': [1, 1, 0, 2],
                                 'proportion': [0.5, 0.5, 0.0, 1.0]})
        paths = [
            plot_losses(metrics, tmp_path / "losses.png"),
            plot_toy_curves(toy, tmp_path / "toy.png"),
            plot_regret_shift(histogram, tmp_path / "shift.png"),
            plot_opening_lengths(openings, tmp_path / "nested" / "openings.png"),
        ]
        for path in paths:
            assert path.exists() and path.stat().st_size > 0


if __name__ == "__main__":
    """Run tests from command line."""
    pytest.main([__file__, "-v"])
