"""
Game registry and state-level helpers.

`make_game('hex', 5)` builds an environment; the module-level helpers
(`legal_actions`, `apply`, `terminal_value`, `encode`) dispatch on the
state's game_id so callers holding only a GameState can use them.
"""

import re
from functools import lru_cache
from typing import List, Optional

import numpy as np

from src.games.base import Game, GameRuleError, GameState, Outcome, Player
from src.games.hex import HexGame
from src.games.othello import OthelloGame

GAMES = {'hex': HexGame, 'othello': OthelloGame}


@lru_cache(maxsize=None)
def make_game(name: str, size: int) -> Game:
    """Build (and cache) a game environment."""
    if name not in GAMES:
        raise GameRuleError(f"Unknown game '{name}'. Known: {sorted(GAMES)}")
    return GAMES[name](size)


def get_game(game_id: str) -> Game:
    """Environment for a game_id such as 'hex5'."""
    match = re.fullmatch(r"([a-z]+)(\d+)", game_id)
    if not match:
        raise GameRuleError(f"Malformed game id '{game_id}'")
    return make_game(match.group(1), int(match.group(2)))


def legal_actions(state: GameState) -> List[int]:
    return get_game(state.game_id).legal_actions(state)


def apply(state: GameState, action: int) -> GameState:
    return get_game(state.game_id).apply(state, action)


def terminal_value(state: GameState) -> Optional[Outcome]:
    return get_game(state.game_id).terminal_value(state)


def encode(state: GameState) -> np.ndarray:
    return get_game(state.game_id).encode(state)


def state_to_string(state: GameState) -> str:
    return get_game(state.game_id).state_to_string(state)


def state_from_string(text: str) -> GameState:
    return get_game(text.split('|', 1)[0]).state_from_string(text)


__all__ = [
    'Game', 'GameRuleError', 'GameState', 'Outcome', 'Player',
    'HexGame', 'OthelloGame', 'make_game', 'get_game',
    'legal_actions', 'apply', 'terminal_value', 'encode',
    'state_to_string', 'state_from_string',
]
