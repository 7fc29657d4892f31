"""
Self-play game records and their JSON-lines log format.

One line per game:
    iteration, worker_id, game_index, opening (state string), provenance,
    opening_entry_id, opening_move_count, moves (action indices), z,
    v_selected, regrets, candidate {state, gamma, regret, source, inserted},
    ema {old, new} for buffer-opened games
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional

import numpy as np
import orjson

from src.control.regret import Candidate, Provenance, Trajectory
from src.games import get_game
from src.games.base import GameState, Player


@dataclass
class GameRecord:
    """
    A finished self-play game.

    Attributes:
        trajectory: decisions with V_selected, outcome and opening provenance
        policy_targets: root visit distributions, one per decision state
        regrets: per-decision regrets (computed once the game ends)
        candidate: the state offered to the buffer, if any
        inserted: whether the buffer accepted the candidate
        ema: (old, new) regret of the opening entry for buffer-opened games
    """
    trajectory: Trajectory
    policy_targets: List[np.ndarray]
    regrets: np.ndarray
    iteration: int = 0
    worker_id: int = 0
    game_index: int = 0
    candidate: Optional[Candidate] = None
    inserted: Optional[bool] = None
    ema: Optional[tuple] = None
    archive_pushes: int = 0

    def __post_init__(self):
        if len(self.policy_targets) != len(self.trajectory.records):
            raise ValueError(
                f"{len(self.policy_targets)} policy targets for "
                f"{len(self.trajectory.records)} decision states"
            )

    @property
    def length(self) -> int:
        return len(self.trajectory.records)

    @property
    def provenance(self) -> Provenance:
        return self.trajectory.opening

    @property
    def states(self) -> List[GameState]:
        return [r.state for r in self.trajectory.records]

    def value_targets(self) -> np.ndarray:
        """Outcome z from the perspective of each decision state's mover."""
        z = self.trajectory.z
        return np.array([z if r.mover == Player.FIRST else -z
                         for r in self.trajectory.records], dtype=np.float64)

    def to_log_dict(self) -> Dict[str, Any]:
        traj = self.trajectory
        game = get_game(traj.records[0].state.game_id)
        entry: Dict[str, Any] = {
            'iteration': self.iteration,
            'worker_id': self.worker_id,
            'game_index': self.game_index,
            'game_id': game.game_id,
            'opening': game.state_to_string(traj.records[0].state),
            'provenance': traj.opening.value,
            'opening_entry_id': traj.opening_entry_id,
            'opening_move_count': traj.opening_move_count,
            'moves': [r.action for r in traj.records],
            'z': traj.z,
            'v_selected': [r.v_selected for r in traj.records],
            'regrets': self.regrets.tolist(),
            'candidate': None,
            'ema': None,
        }
        if self.candidate is not None:
            entry['candidate'] = {
                'state': game.state_to_string(self.candidate.state),
                'gamma': self.candidate.gamma,
                'regret': self.candidate.regret,
                'source': self.candidate.source.value,
                'trajectory_index': self.candidate.trajectory_index,
                'inserted': self.inserted,
            }
        if self.ema is not None:
            entry['ema'] = {'old': self.ema[0], 'new': self.ema[1]}
        return entry


@dataclass
class LoggedGame:
    """A game read back from games.jsonl with its decision states replayed."""
    data: Dict[str, Any]
    states: List[GameState] = field(default_factory=list)

    @property
    def regrets(self) -> np.ndarray:
        return np.asarray(self.data['regrets'], dtype=np.float64)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LoggedGame":
        game = get_game(data['game_id'])
        state = game.state_from_string(data['opening'])
        states = []
        for action in data['moves']:
            states.append(state)
            state = game.apply(state, action)
        return cls(data=data, states=states)


def append_game_logs(path: Path, records: List[GameRecord]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'ab') as f:
        for record in records:
            f.write(orjson.dumps(record.to_log_dict(), option=orjson.OPT_SERIALIZE_NUMPY))
            f.write(b'\n')


def read_game_logs(path: Path) -> Iterator[Dict[str, Any]]:
    with open(path, 'rb') as f:
        for line in f:
            if line.strip():
                yield orjson.loads(line)


def truncate_game_logs(path: Path, max_iteration: int) -> None:
    """Drop games logged after `max_iteration` (used when resuming)."""
    path = Path(path)
    if not path.exists():
        return
    kept = [g for g in read_game_logs(path) if g['iteration'] <= max_iteration]
    with open(path, 'wb') as f:
        for g in kept:
            f.write(orjson.dumps(g))
            f.write(b'\n')
