"""
Configuration Management Module

This module handles loading and accessing configuration from:
- YAML configuration files (training.yaml, toy.yaml)
- Environment variables (.env file)

Notes:
- Singleton pattern: only one Config instance exists per process
- Environment variables override the output and log locations
- Run-level settings (RunConfig) are built on top of the packaged
  defaults returned here, see src/training/run_config.py
"""

import copy
import os
import yaml
from pathlib import Path
from typing import Dict, Any, List
from dotenv import load_dotenv


class ConfigurationError(Exception):
    """Custom exception for configuration-related errors."""
    pass


class Config:
    """
    Configuration manager using Singleton pattern.

    This ensures all parts of the application use the same defaults.

    Usage:
        config = get_config()
        defaults = config.get_training_defaults()
        grid = config.get_sweep_grid('tau')
    """

    _instance = None
    _initialized = False

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super(Config, cls).__new__(cls)
        return cls._instance

    def __init__(self):
        """Initialize configuration (only runs once due to Singleton)."""
        if not Config._initialized:
            load_dotenv()

            self.project_root = Path(__file__).parent.parent.parent
            self.config_dir = self.project_root / "configs"

            self._load_configs()

            Config._initialized = True

    def _load_configs(self):
        """Load all YAML configuration files."""
        try:
            with open(self.config_dir / "training.yaml", 'r') as f:
                self.training_config = yaml.safe_load(f)

            with open(self.config_dir / "toy.yaml", 'r') as f:
                self.toy_config = yaml.safe_load(f)

        except FileNotFoundError as e:
            raise ConfigurationError(
                f"Configuration file not found: {e.filename}\n"
                f"Please ensure all config files exist in {self.config_dir}"
            )
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Error parsing YAML file: {e}")

    def get_training_defaults(self) -> Dict[str, Any]:
        """
        Get the desk-scale training profile.

        Returns:
            Deep copy of the nested defaults (run, game, network, mcts,
            optimizer, loss_weights, restart). Callers may mutate it freely.
        """
        defaults = {k: v for k, v in self.training_config.items() if k != 'sweep'}
        return copy.deepcopy(defaults)

    def get_sweep_grid(self, param: str) -> List[float]:
        """
        Get the default grid for one swept hyperparameter.

        Args:
            param: one of 'lambda', 'tau', 'kappa', 'alpha'

        Raises:
            ConfigurationError: if the parameter has no grid
        """
        grids = self.training_config.get('sweep', {})
        if param not in grids:
            raise ConfigurationError(
                f"No sweep grid for '{param}'. Known: {sorted(grids)}"
            )
        return list(grids[param])

    def get_toy_settings(self) -> Dict[str, Any]:
        """Get the tabular toy-experiment protocol."""
        return copy.deepcopy(self.toy_config.get('toy', {}))

    def get_output_root(self) -> Path:
        """Get the root directory for run outputs (RGSC_OUTPUT_ROOT)."""
        root = Path(os.getenv('RGSC_OUTPUT_ROOT', 'runs'))
        if not root.is_absolute():
            root = self.project_root / root
        root.mkdir(parents=True, exist_ok=True)
        return root

    def get_log_dir(self) -> Path:
        """Get path to logs directory."""
        log_dir = Path(os.getenv('LOG_DIR', 'runs/logs'))
        if not log_dir.is_absolute():
            log_dir = self.project_root / log_dir
        log_dir.mkdir(parents=True, exist_ok=True)
        return log_dir

    def get_log_level(self) -> str:
        """Get logging level from environment (default: INFO)."""
        return os.getenv('LOG_LEVEL', 'INFO').upper()

    def validate_config(self) -> bool:
        """
        Validate that the packaged defaults have every required section.

        Raises:
            ConfigurationError: If a section is missing
        """
        errors = []

        required_sections = ['run', 'game', 'network', 'mcts', 'optimizer',
                             'loss_weights', 'restart', 'sweep']
        for section in required_sections:
            if section not in self.training_config:
                errors.append(f"training.yaml missing section: {section}")

        if 'toy' not in self.toy_config:
            errors.append("toy.yaml missing section: toy")

        if errors:
            raise ConfigurationError(
                "Configuration validation failed:\n" + "\n".join(f"- {e}" for e in errors)
            )

        return True


def get_config() -> Config:
    """
    Get the global configuration instance.

    Usage:
        from src.utils.config import get_config

        config = get_config()
        toy = config.get_toy_settings()
    """
    return Config()
