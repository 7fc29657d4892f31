"""
Unit Tests for Configuration Loading and Run Settings
"""

import pytest
import yaml

from src.training.run_config import RunConfig, apply_overrides, deep_merge
from src.utils.config import ConfigurationError, get_config


class TestConfig:
    """Test suite for the packaged defaults."""

    def test_singleton(self):
        """Test that every call returns the same instance."""
        assert get_config() is get_config()

    def test_packaged_files_valid(self):
        """Test that training.yaml and toy.yaml have every section."""
        config = get_config()
        assert config.validate_config()
        assert 'sweep' not in config.get_training_defaults()
        assert config.get_sweep_grid('tau') == [0.1, 0.5, 1.0]
        assert config.get_toy_settings()['levels'] == [5, 6]

    def test_defaults_are_copies(self):
        """Test that callers cannot mutate the shared defaults."""
        config = get_config()
        config.get_training_defaults()['run']['seed'] = 99
        assert config.get_training_defaults()['run']['seed'] == 0

    def test_unknown_sweep_grid(self):
        """Test the error for a parameter without a grid."""
        with pytest.raises(ConfigurationError):
            get_config().get_sweep_grid('beta')

    def test_output_root_from_env(self, tmp_path, monkeypatch):
        """Test RGSC_OUTPUT_ROOT."""
        monkeypatch.setenv('RGSC_OUTPUT_ROOT', str(tmp_path / "out"))
        assert get_config().get_output_root() == tmp_path / "out"
        assert (tmp_path / "out").is_dir()


class TestRunConfig:
    """Test suite for RunConfig."""

    def test_packaged_defaults_validate(self):
        """Test that the desk-scale profile is valid as shipped."""
        cfg = RunConfig.load().validate()
        assert cfg.run.method == 'rgsc'
        assert cfg.game.name == 'hex'
        assert cfg.net_config().action_size == 25

    def test_user_file_and_overrides(self, tmp_path):
        """Test precedence: defaults < YAML file < dotted overrides."""
        path = tmp_path / "run.yaml"
        path.write_text(yaml.safe_dump({'run': {'seed': 3, 'iterations': 2},
                                        'game': {'name': 'othello', 'size': 6}}))
        cfg = RunConfig.load(path, {'run.seed': 5, 'run.method': None})
        assert cfg.run.seed == 5
        assert cfg.run.iterations == 2
        assert cfg.run.method == 'rgsc'
        assert cfg.make_game().action_size == 37

    @pytest.mark.parametrize('name', ['smoke', 'othello_rgsc', 'hex_ranking_ablation'])
    def test_example_configs_validate(self, name):
        """Test that every shipped example config is valid."""
        path = get_config().config_dir / "examples" / f"{name}.yaml"
        assert RunConfig.load(path).validate().run.method == 'rgsc'

    def test_unknown_keys_rejected(self):
        """Test that typos fail loudly."""
        with pytest.raises(ConfigurationError):
            RunConfig.from_dict({'run': {'itterations': 3}})
        with pytest.raises(ConfigurationError):
            RunConfig.from_dict({'trainer': {}})
        with pytest.raises(ConfigurationError):
            RunConfig.load(overrides={'seed': 1})

    def test_missing_file(self, tmp_path):
        """Test a clear error for a missing config file."""
        with pytest.raises(ConfigurationError, match="not found"):
            RunConfig.load(tmp_path / "missing.yaml")

    def test_validation_reports_every_error(self):
        """Test that all violations are listed in one message."""
        cfg = RunConfig().with_overrides({'restart.buffer_rate': 1.5, 'mcts.simulations': 0,
                                          'game.name': 'chess'})
        with pytest.raises(ConfigurationError) as exc:
            cfg.validate()
        message = str(exc.value)
        assert "restart.buffer_rate must be in [0, 1], got 1.5" in message
        assert "mcts.simulations" in message
        assert "game.name" in message

    def test_odd_othello_rejected(self):
        """Test the board-size rule for Othello."""
        with pytest.raises(ConfigurationError):
            RunConfig().with_overrides({'game.name': 'othello', 'game.size': 5}).validate()

    def test_ignored_restart_settings(self):
        """Test that non-default settings a method never reads are reported."""
        cfg = RunConfig().with_overrides({'run.method': 'alphazero', 'restart.capacity': 7})
        assert cfg.warn_ignored() == ['capacity']
        gevc = cfg.with_overrides({'run.method': 'gevc'})
        assert gevc.warn_ignored() == []

    def test_regret_heads_only_for_rgsc(self):
        """Test that baselines train neither regret head."""
        weights = RunConfig().with_overrides({'run.method': 'gesc'}).effective_loss_weights()
        assert weights.regret == 0.0 and weights.rank == 0.0
        assert weights.policy == 1.0
        assert RunConfig().effective_loss_weights().rank == 1.0

    def test_model_hash(self):
        """Test that the model hash follows game and topology only."""
        base = RunConfig()
        assert base.model_hash() == base.with_overrides({'network.init_seed': 9,
                                                         'run.method': 'gevc'}).model_hash()
        assert base.model_hash() != base.with_overrides({'network.filters': 8}).model_hash()
        assert base.model_hash() != base.with_overrides({'game.size': 7}).model_hash()

    def test_run_hash(self):
        """Test that the run hash ignores output location and length but not settings."""
        base = RunConfig().with_overrides({'run.workers': 2})
        same = base.with_overrides({'run.output_dir': '/tmp/x', 'run.iterations': 99,
                                    'run.eval_every': 5})
        assert base.run_hash() == same.run_hash()
        assert base.run_hash() != base.with_overrides({'restart.buffer_rate': 0.9}).run_hash()
        assert base.run_hash() != base.with_overrides({'run.workers': 3}).run_hash()

    def test_output_path(self, tmp_path, monkeypatch):
        """Test the default run directory name."""
        monkeypatch.setenv('RGSC_OUTPUT_ROOT', str(tmp_path))
        cfg = RunConfig().with_overrides({'run.method': 'gevc', 'run.seed': 4})
        assert cfg.output_path() == tmp_path / "gevc_seed4"

    def test_merge_helpers(self):
        """Test nested merge and dotted overrides."""
        merged = deep_merge({'a': {'x': 1, 'y': 2}}, {'a': {'y': 3}, 'b': 4})
        assert merged == {'a': {'x': 1, 'y': 3}, 'b': 4}
        assert apply_overrides({'a': {}}, {'a.x': 1, 'a.y': None}) == {'a': {'x': 1}}


if __name__ == "__main__":
    """Run tests from command line."""
    pytest.main([__file__, "-v"])
