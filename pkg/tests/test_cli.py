"""
Unit Tests for the Command-Line Interface
"""

import pandas as pd
import pytest
from click.testing import CliRunner

from src.cli import cli, latest_checkpoint, parse_overrides, parse_values
from src.models.checkpoint import CheckpointError
from src.utils.config import ConfigurationError
from src.utils.logger import LoggerSetup

TINY_SETTINGS = [
    'run.states_per_iteration=12', 'run.optimization_steps_per_iteration=2',
    'run.batch_size=8', 'run.freeze_steps=2', 'run.freeze_games=4', 'game.size=3',
    'network.torso=mlp', 'network.hidden=8', 'network.head_hidden=4',
    'mcts.simulations=4', 'restart.capacity=3',
]


@pytest.fixture
def runner():
    yield CliRunner()
    # the stderr sink points at the runner's captured stream
    LoggerSetup.reset()


def invoke(runner, args):
    return runner.invoke(cli, ['--log-level', 'WARNING'] + args)


def tiny_train_args(run_dir, method='rgsc', iterations=2):
    args = ['train', '--method', method, '--iterations', str(iterations), '--workers', '1',
            '--output-dir', str(run_dir)]
    for setting in TINY_SETTINGS:
        args += ['--set', setting]
    return args


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory):
    run_dir = tmp_path_factory.mktemp("cli") / "rgsc"
    result = CliRunner().invoke(cli, ['--log-level', 'WARNING'] + tiny_train_args(run_dir))
    LoggerSetup.reset()
    assert result.exit_code == 0, result.output
    return run_dir


class TestHelpers:
    """Test suite for argument parsing helpers."""

    def test_parse_overrides(self):
        """Test YAML scalar parsing of --set values."""
        parsed = parse_overrides(('run.seed=3', 'game.name=othello', 'mcts.c_puct=1.25',
                                  'run.method=null'))
        assert parsed == {'run.seed': 3, 'game.name': 'othello', 'mcts.c_puct': 1.25,
                          'run.method': None}
        with pytest.raises(ConfigurationError):
            parse_overrides(('run.seed',))

    def test_parse_values(self):
        """Test comma-separated sweep values."""
        assert parse_values('0.1, 0.5,1') == [0.1, 0.5, 1.0]
        assert parse_values(None) is None

    def test_latest_checkpoint(self, tmp_path):
        """Test numeric ordering of checkpoint directories."""
        for k in (2, 10, 9):
            (tmp_path / f"ckpt_{k}").mkdir()
        assert latest_checkpoint(tmp_path).name == "ckpt_10"
        with pytest.raises(CheckpointError):
            latest_checkpoint(tmp_path / "missing")


class TestTrainCommand:
    """Test suite for train and sweep."""

    def test_train_writes_run(self, trained_run):
        """Test checkpoints and metrics of a CLI run."""
        assert (trained_run / "ckpt_2" / "model.npz").exists()
        metrics = pd.read_csv(trained_run / "metrics.csv")
        assert metrics['iteration'].tolist() == [1, 2]

    def test_bad_config_exits_2(self, runner, tmp_path):
        """Test exit code 2 for unknown keys, invalid values and malformed --set."""
        result = invoke(runner, tiny_train_args(tmp_path / "a") + ['--set', 'run.itterations=3'])
        assert result.exit_code == 2
        result = invoke(runner, tiny_train_args(tmp_path / "b") + ['--set', 'restart.buffer_rate=2'])
        assert result.exit_code == 2
        assert "buffer_rate" in result.output
        result = invoke(runner, tiny_train_args(tmp_path / "c") + ['--set', 'oops'])
        assert result.exit_code == 2

    def test_missing_resume_exits_2(self, runner, tmp_path):
        """Test exit code 2 for a checkpoint that does not exist."""
        result = invoke(runner, tiny_train_args(tmp_path / "r") + ['--resume', str(tmp_path / "none")])
        assert result.exit_code == 2

    @pytest.mark.slow
    def test_sweep(self, runner, tmp_path):
        """Test one run per value and the printed comparison."""
        args = ['sweep', '--param', 'tau', '--values', '0.5,1.0',
                '--output-dir', str(tmp_path / "sweep"), '--set', 'run.iterations=1',
                '--set', 'run.workers=1']
        for setting in TINY_SETTINGS:
            args += ['--set', setting]
        result = invoke(runner, args)
        assert result.exit_code == 0, result.output
        assert (tmp_path / "sweep" / "comparison.csv").exists()


class TestToyCommand:
    """Test suite for the toy experiment command."""

    @pytest.mark.slow
    def test_small_experiment(self, runner, tmp_path):
        """Test the three output tables."""
        out = tmp_path / "toy"
        result = invoke(runner, ['toy', '--levels', '3', '--seeds', '2', '--iterations', '200',
                                 '--strategy', 'none', '--strategy', 'regret',
                                 '--output-dir', str(out)])
        assert result.exit_code == 0, result.output
        runs = pd.read_csv(out / "runs.csv")
        assert set(runs['strategy']) == {'none', 'regret'}
        assert set(runs['seed']) == {0, 1}
        assert (out / "aggregate.csv").exists()
        final = pd.read_csv(out / "final.csv")
        assert len(final) == 2

    def test_bad_seed_count(self, runner, tmp_path):
        """Test exit code 2 for zero seeds."""
        result = invoke(runner, ['toy', '--seeds', '0', '--output-dir', str(tmp_path)])
        assert result.exit_code == 2


class TestMatchAndElo:
    """Test suite for match and elo."""

    def test_random_match_appends_summary(self, runner, tmp_path):
        """Test that repeated matches append rows under one header."""
        output = tmp_path / "matches.csv"
        for seed in ('0', '1'):
            result = invoke(runner, ['match', 'random', 'random', '--game', 'hex', '--size', '3',
                                     '--games', '4', '--seed', seed, '--output', str(output),
                                     '--games-log', str(tmp_path / f"games_{seed}.json")])
            assert result.exit_code == 0, result.output
        summary = pd.read_csv(output)
        assert len(summary) == 2
        assert (summary['games'] == 4).all()
        assert (tmp_path / "games_0.json").exists()

    def test_random_match_needs_game(self, runner):
        """Test exit code 1 when the game cannot be inferred."""
        result = invoke(runner, ['match', 'random', 'random', '--games', '2'])
        assert result.exit_code == 1

    def test_checkpoint_match(self, runner, trained_run):
        """Test a checkpoint against the random player."""
        result = invoke(runner, ['match', str(trained_run / "ckpt_2"), 'random',
                                 '--games', '2', '--simulations', '2'])
        assert result.exit_code == 0, result.output

    def test_elo_from_summaries(self, runner, tmp_path):
        """Test the anchored table written from summary rows."""
        source = tmp_path / "summary.csv"
        pd.DataFrame([
            {'player_a': 'new', 'player_b': 'base', 'wins': 3, 'draws': 0, 'losses': 1},
            {'player_a': 'newer', 'player_b': 'new', 'wins': 2, 'draws': 0, 'losses': 2},
        ]).to_csv(source, index=False)
        output = tmp_path / "elo.csv"
        result = invoke(runner, ['elo', str(source), '--anchor', 'base', '--output', str(output)])
        assert result.exit_code == 0, result.output
        table = pd.read_csv(output).set_index('player')
        assert table.loc['base', 'elo'] == pytest.approx(1000.0)
        assert table.loc['newer', 'elo'] == pytest.approx(table.loc['new', 'elo'], abs=1e-3)

    def test_elo_perfect_score_fails(self, runner, tmp_path):
        """Test exit code 1 for an unbounded fit."""
        source = tmp_path / "summary.csv"
        pd.DataFrame([{'player_a': 'a', 'player_b': 'b', 'wins': 4, 'draws': 0,
                       'losses': 0}]).to_csv(source, index=False)
        assert invoke(runner, ['elo', str(source), '--anchor', 'b']).exit_code == 1
        result = invoke(runner, ['elo', str(source), '--anchor', 'b', '--prior-games', '2'])
        assert result.exit_code == 0


class TestAnalyzeCommands:
    """Test suite for the analyze group."""

    def test_selected_regret(self, runner, trained_run, tmp_path):
        """Test the default latest checkpoint."""
        output = tmp_path / "selected.csv"
        result = invoke(runner, ['analyze', 'selected-regret', str(trained_run), '--top-n', '5',
                                 '--output', str(output)])
        assert result.exit_code == 0, result.output
        assert pd.read_csv(output)['iteration'].tolist() == [2]

    def test_opening_lengths_and_plot(self, runner, trained_run, tmp_path):
        """Test the opening-length table and its figure."""
        table = tmp_path / "openings.csv"
        result = invoke(runner, ['analyze', 'opening-lengths', str(trained_run),
                                 '--bucket-width', '3', '--output', str(table)])
        assert result.exit_code == 0, result.output
        figure = tmp_path / "openings.png"
        result = invoke(runner, ['analyze', 'plot', 'openings', str(table), '--output', str(figure)])
        assert result.exit_code == 0, result.output
        assert figure.exists()

    def test_losses_plot(self, runner, trained_run, tmp_path):
        """Test the loss figure from metrics.csv."""
        figure = tmp_path / "losses.png"
        result = invoke(runner, ['analyze', 'plot', 'losses', str(trained_run / "metrics.csv"),
                                 '--output', str(figure)])
        assert result.exit_code == 0, result.output
        assert figure.exists()

    def test_unknown_entry_fails(self, runner, trained_run):
        """Test exit code 1 for an entry id that was never stored."""
        result = invoke(runner, ['analyze', 'track-entry', str(trained_run), '--entry-id', '99999'])
        assert result.exit_code == 1


class TestGradcheckCommand:
    """Test suite for gradcheck."""

    def test_passes(self, runner):
        """Test one PASS line per head."""
        result = invoke(runner, ['gradcheck', '--trials', '2'])
        assert result.exit_code == 0, result.output
        lines = [line for line in result.output.splitlines() if 'relative error' in line]
        assert len(lines) == 5
        assert all(line.endswith('PASS') for line in lines)

    def test_negative_trials(self, runner):
        """Test exit code 2 for a negative trial count."""
        assert invoke(runner, ['gradcheck', '--trials', '-1']).exit_code == 2


if __name__ == "__main__":
    """Run tests from command line."""
    pytest.main([__file__, "-v"])
