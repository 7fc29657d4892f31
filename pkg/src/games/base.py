"""
Game Environment Contract

Shared types for the two-player zero-sum board games used by search and
self-play:

- GameState: immutable position (board tuple, player to move, move count)
- Outcome: final result from the first player's perspective
- Game: abstract environment (legal actions, transitions, encoding,
  text serialization)

Positions are plain frozen dataclasses, so they can be shared between
self-play workers and used as dictionary keys.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import IntEnum
from typing import List, Optional, Tuple

import numpy as np


class GameRuleError(Exception):
    """Raised on rule violations: illegal actions, queries on finished games."""
    pass


class Player(IntEnum):
    """Cell owner / player identifier. FIRST is the reference player."""
    EMPTY = 0
    FIRST = 1
    SECOND = 2

    @property
    def opponent(self) -> "Player":
        if self == Player.EMPTY:
            raise GameRuleError("EMPTY has no opponent")
        return Player.SECOND if self == Player.FIRST else Player.FIRST


CELL_CHARS = {Player.EMPTY: '.', Player.FIRST: 'X', Player.SECOND: 'O'}
CHAR_CELLS = {v: k for k, v in CELL_CHARS.items()}


@dataclass(frozen=True)
class GameState:
    """
    Immutable game position.

    Attributes:
        game_id: registry key, e.g. 'hex5' or 'othello6'
        board: row-major tuple of Player values
        to_move: player whose turn it is
        move_count: actions applied since the true initial position
        terminal: whether the game is over
        winner: winning player, EMPTY for a draw or an unfinished game
    """
    game_id: str
    board: Tuple[int, ...]
    to_move: Player
    move_count: int = 0
    terminal: bool = False
    winner: Player = Player.EMPTY


@dataclass(frozen=True)
class Outcome:
    """Final game result; z is from the FIRST player's perspective."""
    z: int

    def for_player(self, player: Player) -> int:
        """Outcome seen from `player`'s side."""
        return self.z if player == Player.FIRST else -self.z


class Game(ABC):
    """
    Environment contract consumed by MCTS, self-play and evaluation.

    Actions are integer indices into a fixed action space of size
    `action_size`; the network's policy head covers the whole space and
    MCTS masks illegal entries.
    """

    name: str = "game"
    num_planes: int = 3

    def __init__(self, size: int):
        if size < 2:
            raise GameRuleError(f"Board size must be at least 2, got {size}")
        self.size = size
        self.num_cells = size * size

    @property
    def game_id(self) -> str:
        return f"{self.name}{self.size}"

    @property
    @abstractmethod
    def action_size(self) -> int:
        """Number of entries in the action space."""

    @property
    @abstractmethod
    def max_game_length(self) -> int:
        """Upper bound on decisions in a complete game."""

    @abstractmethod
    def initial_state(self) -> GameState:
        """The true initial position."""

    @abstractmethod
    def legal_actions(self, state: GameState) -> List[int]:
        """Legal action indices, ascending. Raises GameRuleError on terminal states."""

    @abstractmethod
    def apply(self, state: GameState, action: int) -> GameState:
        """Play `action`, returning the successor position."""

    @abstractmethod
    def _rebuild(self, board: Tuple[int, ...], to_move: Player, move_count: int) -> GameState:
        """Recompute derived fields (terminal flag, winner) for a raw board."""

    def terminal_value(self, state: GameState) -> Optional[Outcome]:
        """Outcome from the FIRST player's perspective, or None mid-game."""
        if not state.terminal:
            return None
        if state.winner == Player.FIRST:
            return Outcome(1)
        if state.winner == Player.SECOND:
            return Outcome(-1)
        return Outcome(0)

    def legal_mask(self, state: GameState) -> np.ndarray:
        """Boolean mask over the action space."""
        mask = np.zeros(self.action_size, dtype=bool)
        mask[self.legal_actions(state)] = True
        return mask

    def encode(self, state: GameState) -> np.ndarray:
        """
        Network input planes, shape (3, size, size), from the mover's view.

        Plane 0: mover's stones, plane 1: opponent's stones,
        plane 2: all ones when FIRST is to move, zeros otherwise.
        """
        self._check_game(state)
        board = np.asarray(state.board, dtype=np.int8).reshape(self.size, self.size)
        planes = np.zeros((self.num_planes, self.size, self.size), dtype=np.float64)
        planes[0] = board == int(state.to_move)
        planes[1] = board == int(state.to_move.opponent)
        if state.to_move == Player.FIRST:
            planes[2] = 1.0
        return planes

    def encode_batch(self, states: List[GameState]) -> np.ndarray:
        """Stack encodings into shape (B, 3, size, size)."""
        return np.stack([self.encode(s) for s in states], axis=0)

    def action_to_string(self, action: int) -> str:
        """Human-readable action, e.g. 'c2'."""
        if not 0 <= action < self.num_cells:
            return "pass"
        row, col = divmod(action, self.size)
        return f"{chr(ord('a') + col)}{row + 1}"

    def state_to_string(self, state: GameState) -> str:
        """One-line text form: '<game_id>|<cells>|<mover>|<move_count>'."""
        self._check_game(state)
        cells = ''.join(CELL_CHARS[Player(c)] for c in state.board)
        return f"{state.game_id}|{cells}|{CELL_CHARS[state.to_move]}|{state.move_count}"

    def state_from_string(self, text: str) -> GameState:
        """Inverse of state_to_string."""
        try:
            game_id, cells, mover, move_count = text.strip().split('|')
            board = tuple(int(CHAR_CELLS[ch]) for ch in cells)
            to_move = CHAR_CELLS[mover]
            count = int(move_count)
        except (ValueError, KeyError) as e:
            raise GameRuleError(f"Malformed state string {text!r}: {e}")
        if game_id != self.game_id or len(board) != self.num_cells:
            raise GameRuleError(f"State string {text!r} does not belong to {self.game_id}")
        if to_move == Player.EMPTY:
            raise GameRuleError(f"State string {text!r} has no player to move")
        return self._rebuild(board, to_move, count)

    def _check_game(self, state: GameState) -> None:
        if state.game_id != self.game_id:
            raise GameRuleError(f"State of {state.game_id} passed to {self.game_id}")
