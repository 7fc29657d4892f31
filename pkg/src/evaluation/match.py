"""
Head-to-head matches between checkpoints (or a uniform-random player).

Games are paired: player A moves first in even-numbered games and second in
odd-numbered ones. Search runs without Dirichlet noise; each game has its
own RNG stream spawned from the match seed, so results do not depend on
how games are spread over threads.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import norm

from src.games import make_game
from src.games.base import Game, Player
from src.models.checkpoint import load_checkpoint
from src.models.network import NetParams
from src.search.mcts import MCTSConfig, search
from src.utils.logger import get_logger

logger = get_logger(__name__)

RANDOM_PLAYER = 'random'


class EvaluationError(Exception):
    """Raised on incompatible match players, a disconnected Elo graph or bad analysis input."""
    pass


@dataclass(frozen=True)
class MatchPlayer:
    """A checkpoint (params set) or the uniform-random player (params None)."""
    name: str
    params: Optional[NetParams] = None
    game_key: Optional[Tuple[str, int]] = None
    iteration: Optional[int] = None


def load_player(source: Union[str, Path]) -> MatchPlayer:
    if str(source) == RANDOM_PLAYER:
        return MatchPlayer(RANDOM_PLAYER)
    ckpt = load_checkpoint(Path(source))
    meta = ckpt.metadata
    key = (meta['game'], int(meta['size'])) if 'game' in meta else None
    return MatchPlayer(str(source), ckpt.params, key, ckpt.iteration)


def _resolve_game(a: MatchPlayer, b: MatchPlayer, game: Optional[Game]) -> Game:
    keys = {p.game_key for p in (a, b) if p.game_key is not None}
    if len(keys) > 1:
        raise EvaluationError(f"Players were trained on different games: {a.name} {a.game_key}, "
                              f"{b.name} {b.game_key}")
    if keys:
        resolved = make_game(*keys.pop())
        if game is not None and game.game_id != resolved.game_id:
            raise EvaluationError(f"Match game {game.game_id} does not match the checkpoints "
                                  f"({resolved.game_id})")
        game = resolved
    if game is None:
        raise EvaluationError("Two random players need an explicit game")
    for p in (a, b):
        if p.params is not None and p.params.config.action_size != game.action_size:
            raise EvaluationError(f"{p.name} has action size {p.params.config.action_size}, "
                                  f"{game.game_id} needs {game.action_size}")
    return game


@dataclass
class MatchResult:
    """
    Outcome of a match, counted from player A's side.

    games_log holds one dict per game: a_first, winner ('a', 'b' or None), moves.
    """
    player_a: str
    player_b: str
    games_log: List[Dict[str, Any]] = field(default_factory=list)

    @classmethod
    def from_counts(cls, player_a: str, player_b: str, wins: int, draws: int,
                    losses: int) -> "MatchResult":
        """Rebuild a result from a summary row (colours alternate, moves unknown)."""
        outcomes = ['a'] * wins + [None] * draws + ['b'] * losses
        return cls(player_a, player_b, [
            {'a_first': i % 2 == 0, 'winner': w, 'moves': []} for i, w in enumerate(outcomes)
        ])

    def _count(self, winner: Optional[str], a_first: Optional[bool] = None) -> int:
        return sum(1 for g in self.games_log
                   if g['winner'] == winner and (a_first is None or g['a_first'] == a_first))

    @property
    def games(self) -> int:
        return len(self.games_log)

    @property
    def wins(self) -> int:
        return self._count('a')

    @property
    def draws(self) -> int:
        return self._count(None)

    @property
    def losses(self) -> int:
        return self._count('b')

    def color_split(self) -> Dict[str, int]:
        return {
            'wins_first': self._count('a', True), 'wins_second': self._count('a', False),
            'draws_first': self._count(None, True), 'draws_second': self._count(None, False),
            'losses_first': self._count('b', True), 'losses_second': self._count('b', False),
        }

    @property
    def win_rate(self) -> float:
        """(wins + draws / 2) / games for player A."""
        if self.games == 0:
            return float('nan')
        return (self.wins + 0.5 * self.draws) / self.games

    def confidence_interval(self, level: float = 0.95) -> Tuple[float, float]:
        """Normal-approximation binomial interval of the win rate, clipped to [0, 1]."""
        p, n = self.win_rate, self.games
        if n == 0:
            return float('nan'), float('nan')
        half = norm.ppf(0.5 + level / 2.0) * np.sqrt(p * (1.0 - p) / n)
        return max(0.0, p - half), min(1.0, p + half)

    def swapped(self) -> "MatchResult":
        """The same games seen from player B's side."""
        flip = {'a': 'b', 'b': 'a', None: None}
        return MatchResult(self.player_b, self.player_a, [
            {'a_first': not g['a_first'], 'winner': flip[g['winner']], 'moves': g['moves']}
            for g in self.games_log
        ])

    def summary(self) -> Dict[str, Any]:
        low, high = self.confidence_interval()
        row = {'player_a': self.player_a, 'player_b': self.player_b, 'games': self.games,
               'wins': self.wins, 'draws': self.draws, 'losses': self.losses,
               'win_rate': self.win_rate, 'ci_low': low, 'ci_high': high}
        row.update(self.color_split())
        return row


def _choose(player: MatchPlayer, state, game: Game, cfg: MCTSConfig,
            rng: np.random.Generator) -> int:
    if player.params is None:
        return int(rng.choice(game.legal_actions(state)))
    return search(state, player.params, cfg, rng).selected_action


def play_one(a: MatchPlayer, b: MatchPlayer, game: Game, a_first: bool, cfg: MCTSConfig,
             seed: np.random.SeedSequence) -> Dict[str, Any]:
    """One game; returns {'a_first', 'winner', 'moves'}."""
    rng = np.random.default_rng(seed)
    seats = {Player.FIRST: a if a_first else b, Player.SECOND: b if a_first else a}
    state = game.initial_state()
    moves = []
    while not state.terminal:
        action = _choose(seats[state.to_move], state, game, cfg, rng)
        moves.append(action)
        state = game.apply(state, action)

    winner = None
    if state.winner != Player.EMPTY:
        a_seat = Player.FIRST if a_first else Player.SECOND
        winner = 'a' if state.winner == a_seat else 'b'
    return {'a_first': a_first, 'winner': winner, 'moves': moves}


def play_match(player_a: Union[str, Path, MatchPlayer], player_b: Union[str, Path, MatchPlayer],
               games: int, simulations: int = 50, temperature: float = 1.0, seed: int = 0,
               c_puct: float = 1.5, game: Optional[Game] = None, workers: int = 1) -> MatchResult:
    """
    Play `games` paired games between two players.

    Args:
        player_a, player_b: checkpoint directories, 'random' or loaded players
        games: number of games; A moves first in the even-numbered ones
        simulations, temperature, c_puct: search settings (no root noise)
        game: required only when both players are random

    Raises:
        EvaluationError: players disagree on the game
    """
    a = player_a if isinstance(player_a, MatchPlayer) else load_player(player_a)
    b = player_b if isinstance(player_b, MatchPlayer) else load_player(player_b)
    game = _resolve_game(a, b, game)
    cfg = MCTSConfig(simulations=simulations, c_puct=c_puct, temperature=temperature,
                     is_selfplay=False)

    seeds = np.random.SeedSequence(seed).spawn(games)
    logs = Parallel(n_jobs=max(1, workers), backend='threading')(
        delayed(play_one)(a, b, game, i % 2 == 0, cfg, seeds[i]) for i in range(games)
    )
    result = MatchResult(a.name, b.name, list(logs))
    logger.info(f"Match {a.name} vs {b.name} on {game.game_id}: "
                f"{result.wins}W {result.draws}D {result.losses}L (win rate {result.win_rate:.3f})")
    return result
