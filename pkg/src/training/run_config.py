"""
Run Configuration

A RunConfig is built by deep-merging a user YAML file over the packaged
defaults (configs/training.yaml), then applying dotted overrides from the
command line:

    cfg = RunConfig.load('my_run.yaml', {'run.method': 'gevc', 'run.seed': 1})
    cfg.validate()

Two hashes guard checkpoints:
- model_hash: game + network topology (can these weights be loaded?)
- run_hash: everything except output directory and iteration count
  (can this run be resumed exactly?)
"""

import copy
import hashlib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

import orjson
import yaml
from joblib import cpu_count

from src.games import make_game
from src.games.base import Game
from src.models.losses import LossWeights
from src.models.network import NetConfig
from src.search.mcts import MCTSConfig
from src.utils.config import ConfigurationError, get_config
from src.utils.logger import get_logger

logger = get_logger(__name__)

METHODS = ('alphazero', 'gevc', 'gesc', 'rgsc')
STORE_METHODS = ('gevc', 'gesc', 'rgsc')


@dataclass(frozen=True)
class GameSettings:
    name: str = 'hex'
    size: int = 5


@dataclass(frozen=True)
class NetworkSettings:
    torso: str = 'resnet'
    blocks: int = 1
    filters: int = 32
    hidden: int = 64
    head_hidden: int = 32
    activation: str = 'relu'
    init_seed: int = 0


@dataclass(frozen=True)
class MCTSSettings:
    simulations: int = 50
    c_puct: float = 1.5
    dirichlet_alpha: Optional[float] = None
    noise_ratio: float = 0.25
    temperature: float = 1.0


@dataclass(frozen=True)
class OptimizerSettings:
    learning_rate: float = 0.02
    momentum: float = 0.9
    weight_decay: float = 1e-4


@dataclass(frozen=True)
class RestartSettings:
    buffer_rate: float = 0.5
    temperature: float = 0.1
    capacity: int = 100
    ema_alpha: float = 0.5
    gesc_nodes_per_move: int = 1
    candidate_scoring: str = 'ranking'


@dataclass(frozen=True)
class RunSettings:
    method: str = 'rgsc'
    iterations: int = 40
    states_per_iteration: int = 4000
    optimization_steps_per_iteration: int = 50
    batch_size: int = 256
    replay_window: int = 20
    seed: int = 0
    workers: int = 0
    warmup_games: int = 0
    freeze_steps: int = 200
    freeze_games: int = 64
    eval_every: int = 0
    eval_games: int = 100
    eval_simulations: int = 50
    eval_opponent: str = 'random'
    output_dir: Optional[str] = None


SECTIONS = {
    'run': RunSettings,
    'game': GameSettings,
    'network': NetworkSettings,
    'mcts': MCTSSettings,
    'optimizer': OptimizerSettings,
    'loss_weights': LossWeights,
    'restart': RestartSettings,
}

# restart settings each method actually reads
METHOD_RESTART_FIELDS = {
    'alphazero': (),
    'gevc': ('buffer_rate', 'capacity'),
    'gesc': ('buffer_rate', 'capacity', 'gesc_nodes_per_move'),
    'rgsc': ('buffer_rate', 'temperature', 'capacity', 'ema_alpha', 'candidate_scoring'),
}


def deep_merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in (update or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def apply_overrides(data: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Set dotted keys ('restart.buffer_rate') in a nested dict; None values are skipped."""
    data = copy.deepcopy(data)
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        section, _, key = dotted.partition('.')
        if not key:
            raise ConfigurationError(f"Override '{dotted}' must look like section.key")
        data.setdefault(section, {})[key] = value
    return data


def _canonical_hash(payload: Dict[str, Any]) -> str:
    return hashlib.sha256(orjson.dumps(payload, option=orjson.OPT_SORT_KEYS)).hexdigest()[:16]


@dataclass(frozen=True)
class RunConfig:
    run: RunSettings = field(default_factory=RunSettings)
    game: GameSettings = field(default_factory=GameSettings)
    network: NetworkSettings = field(default_factory=NetworkSettings)
    mcts: MCTSSettings = field(default_factory=MCTSSettings)
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    restart: RestartSettings = field(default_factory=RestartSettings)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        """
        Build from a nested dict.

        Raises:
            ConfigurationError: unknown section or key
        """
        unknown = sorted(set(data) - set(SECTIONS))
        if unknown:
            raise ConfigurationError(f"Unknown config sections: {', '.join(unknown)}")
        kwargs = {}
        for name, section_cls in SECTIONS.items():
            values = data.get(name) or {}
            known = {f.name for f in fields(section_cls)}
            bad = sorted(set(values) - known)
            if bad:
                raise ConfigurationError(f"Unknown keys in '{name}': {', '.join(bad)}")
            kwargs[name] = section_cls(**values)
        return cls(**kwargs)

    @classmethod
    def load(cls, path: Optional[Path] = None,
             overrides: Optional[Dict[str, Any]] = None) -> "RunConfig":
        """Packaged defaults, then the YAML file at `path`, then dotted overrides."""
        data = get_config().get_training_defaults()
        if path is not None:
            path = Path(path)
            if not path.exists():
                raise ConfigurationError(f"Config file not found: {path}")
            try:
                with open(path, 'r') as f:
                    user = yaml.safe_load(f) or {}
            except yaml.YAMLError as e:
                raise ConfigurationError(f"Error parsing {path}: {e}")
            data = deep_merge(data, user)
        data = apply_overrides(data, overrides or {})
        return cls.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def with_overrides(self, overrides: Dict[str, Any]) -> "RunConfig":
        return RunConfig.from_dict(apply_overrides(self.to_dict(), overrides))

    def validate(self) -> "RunConfig":
        """
        Check every field and report all violations at once.

        Raises:
            ConfigurationError: message lists each offending field
        """
        errors: List[str] = []

        def check(ok: bool, message: str) -> None:
            if not ok:
                errors.append(message)

        r, g, n, m, o, w, s = (self.run, self.game, self.network, self.mcts,
                               self.optimizer, self.loss_weights, self.restart)

        check(r.method in METHODS, f"run.method must be one of {METHODS}, got {r.method!r}")
        check(r.iterations >= 0, f"run.iterations must be >= 0, got {r.iterations}")
        for name in ('states_per_iteration', 'optimization_steps_per_iteration',
                     'batch_size', 'replay_window', 'eval_games', 'eval_simulations'):
            value = getattr(r, name)
            check(value >= 1, f"run.{name} must be >= 1, got {value}")
        for name in ('workers', 'warmup_games', 'freeze_steps', 'freeze_games', 'eval_every'):
            value = getattr(r, name)
            check(value >= 0, f"run.{name} must be >= 0, got {value}")

        check(g.name in ('hex', 'othello'), f"game.name must be 'hex' or 'othello', got {g.name!r}")
        if g.name == 'othello':
            check(g.size >= 4 and g.size % 2 == 0,
                  f"game.size must be even and >= 4 for othello, got {g.size}")
        else:
            check(g.size >= 2, f"game.size must be >= 2, got {g.size}")

        check(n.torso in ('resnet', 'mlp'), f"network.torso must be 'resnet' or 'mlp', got {n.torso!r}")
        check(n.activation in ('relu', 'tanh'),
              f"network.activation must be 'relu' or 'tanh', got {n.activation!r}")
        if n.torso == 'resnet':
            check(1 <= n.blocks <= 3, f"network.blocks must be in [1, 3], got {n.blocks}")
        for name in ('filters', 'hidden', 'head_hidden'):
            check(getattr(n, name) >= 1, f"network.{name} must be >= 1, got {getattr(n, name)}")

        check(m.simulations >= 1, f"mcts.simulations must be >= 1, got {m.simulations}")
        check(m.c_puct > 0, f"mcts.c_puct must be > 0, got {m.c_puct}")
        check(m.dirichlet_alpha is None or m.dirichlet_alpha > 0,
              f"mcts.dirichlet_alpha must be > 0 or null, got {m.dirichlet_alpha}")
        check(0.0 <= m.noise_ratio <= 1.0, f"mcts.noise_ratio must be in [0, 1], got {m.noise_ratio}")
        check(m.temperature >= 0, f"mcts.temperature must be >= 0, got {m.temperature}")

        check(o.learning_rate > 0, f"optimizer.learning_rate must be > 0, got {o.learning_rate}")
        check(0.0 <= o.momentum < 1.0, f"optimizer.momentum must be in [0, 1), got {o.momentum}")
        check(o.weight_decay >= 0, f"optimizer.weight_decay must be >= 0, got {o.weight_decay}")

        for name in ('policy', 'value', 'regret', 'rank'):
            check(getattr(w, name) >= 0, f"loss_weights.{name} must be >= 0, got {getattr(w, name)}")

        check(0.0 <= s.buffer_rate <= 1.0, f"restart.buffer_rate must be in [0, 1], got {s.buffer_rate}")
        check(s.temperature > 0, f"restart.temperature must be > 0, got {s.temperature}")
        check(s.capacity >= 1, f"restart.capacity must be >= 1, got {s.capacity}")
        check(0.0 < s.ema_alpha <= 1.0, f"restart.ema_alpha must be in (0, 1], got {s.ema_alpha}")
        check(s.gesc_nodes_per_move >= 1,
              f"restart.gesc_nodes_per_move must be >= 1, got {s.gesc_nodes_per_move}")
        check(s.candidate_scoring in ('ranking', 'regret_value'),
              f"restart.candidate_scoring must be 'ranking' or 'regret_value', got {s.candidate_scoring!r}")

        if errors:
            raise ConfigurationError("Invalid run configuration:\n" + "\n".join(f"- {e}" for e in errors))

        self.warn_ignored()
        return self

    def warn_ignored(self) -> List[str]:
        """Log restart settings that differ from defaults but the method never reads."""
        used = METHOD_RESTART_FIELDS.get(self.run.method, ())
        defaults = RestartSettings()
        ignored = [f.name for f in fields(RestartSettings)
                   if f.name not in used and getattr(self.restart, f.name) != getattr(defaults, f.name)]
        for name in ignored:
            logger.warning(f"restart.{name}={getattr(self.restart, name)} is ignored by method "
                           f"'{self.run.method}'")
        return ignored

    @property
    def uses_regret_heads(self) -> bool:
        return self.run.method == 'rgsc'

    def make_game(self) -> Game:
        return make_game(self.game.name, self.game.size)

    def net_config(self) -> NetConfig:
        game = self.make_game()
        n = self.network
        return NetConfig(in_planes=3, size=game.size, action_size=game.action_size,
                         torso=n.torso, blocks=n.blocks, filters=n.filters,
                         hidden=n.hidden, head_hidden=n.head_hidden, activation=n.activation)

    def mcts_config(self, is_selfplay: bool = True, simulations: Optional[int] = None,
                    temperature: Optional[float] = None) -> MCTSConfig:
        m = self.mcts
        return MCTSConfig(
            simulations=simulations if simulations is not None else m.simulations,
            c_puct=m.c_puct,
            dirichlet_alpha=m.dirichlet_alpha,
            noise_ratio=m.noise_ratio,
            temperature=temperature if temperature is not None else m.temperature,
            is_selfplay=is_selfplay,
        )

    def effective_loss_weights(self) -> LossWeights:
        """Regret and ranking heads only train under rgsc."""
        if self.uses_regret_heads:
            return self.loss_weights
        return LossWeights(policy=self.loss_weights.policy, value=self.loss_weights.value,
                           regret=0.0, rank=0.0)

    def resolved_workers(self) -> int:
        return self.run.workers if self.run.workers > 0 else cpu_count()

    def output_path(self) -> Path:
        if self.run.output_dir:
            return Path(self.run.output_dir)
        return get_config().get_output_root() / f"{self.run.method}_seed{self.run.seed}"

    def model_hash(self) -> str:
        network = asdict(self.network)
        network.pop('init_seed')
        return _canonical_hash({'game': asdict(self.game), 'network': network})

    def run_hash(self) -> str:
        payload = self.to_dict()
        run = dict(payload['run'])
        for key in ('output_dir', 'iterations', 'workers', 'eval_every', 'eval_games',
                    'eval_simulations', 'eval_opponent'):
            run.pop(key)
        run['workers'] = self.resolved_workers()
        payload['run'] = run
        return _canonical_hash(payload)
