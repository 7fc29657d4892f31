"""
Othello

Standard rules on an even n x n board (default 6x6). FIRST plays the dark
discs and moves first. When the mover has no flipping move the only legal
action is an explicit pass (index n*n); the game ends when neither side
can move.
"""

from functools import lru_cache
from typing import Dict, List, Tuple

from src.games.base import Game, GameRuleError, GameState, Player

DIRECTIONS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


@lru_cache(maxsize=200_000)
def _flips_by_move(size: int, board: Tuple[int, ...], player: int) -> Dict[int, Tuple[int, ...]]:
    """Map each legal placement to the discs it flips."""
    opponent = 3 - player
    moves = {}
    for idx, cell in enumerate(board):
        if cell != Player.EMPTY:
            continue
        r0, c0 = divmod(idx, size)
        flipped = []
        for dr, dc in DIRECTIONS:
            line = []
            r, c = r0 + dr, c0 + dc
            while 0 <= r < size and 0 <= c < size and board[r * size + c] == opponent:
                line.append(r * size + c)
                r, c = r + dr, c + dc
            if line and 0 <= r < size and 0 <= c < size and board[r * size + c] == player:
                flipped.extend(line)
        if flipped:
            moves[idx] = tuple(sorted(flipped))
    return moves


class OthelloGame(Game):
    """n x n Othello with an explicit pass action."""

    name = "othello"

    def __init__(self, size: int = 6):
        if size % 2 != 0 or size < 4:
            raise GameRuleError(f"Othello needs an even board size >= 4, got {size}")
        super().__init__(size)

    @property
    def pass_action(self) -> int:
        return self.num_cells

    @property
    def action_size(self) -> int:
        return self.num_cells + 1

    @property
    def max_game_length(self) -> int:
        # every placement plus at most one pass between placements
        return 2 * self.num_cells

    def initial_state(self) -> GameState:
        n = self.size
        board = [int(Player.EMPTY)] * self.num_cells
        lo, hi = n // 2 - 1, n // 2
        board[lo * n + lo] = int(Player.SECOND)
        board[hi * n + hi] = int(Player.SECOND)
        board[lo * n + hi] = int(Player.FIRST)
        board[hi * n + lo] = int(Player.FIRST)
        return GameState(game_id=self.game_id, board=tuple(board), to_move=Player.FIRST)

    def flips(self, state: GameState) -> Dict[int, Tuple[int, ...]]:
        """Legal placements for the mover and the discs each would flip."""
        return _flips_by_move(self.size, state.board, int(state.to_move))

    def legal_actions(self, state: GameState) -> List[int]:
        self._check_game(state)
        if state.terminal:
            raise GameRuleError("legal_actions called on a finished Othello game")
        moves = sorted(self.flips(state))
        return moves if moves else [self.pass_action]

    def apply(self, state: GameState, action: int) -> GameState:
        self._check_game(state)
        if state.terminal:
            raise GameRuleError(f"Cannot play {action} in a finished Othello game")

        flips = self.flips(state)
        if action == self.pass_action:
            if flips:
                raise GameRuleError(
                    f"Pass is illegal: {state.to_move.name} has {len(flips)} flipping moves"
                )
            board = state.board
        elif action in flips:
            cells = list(state.board)
            cells[action] = int(state.to_move)
            for idx in flips[action]:
                cells[idx] = int(state.to_move)
            board = tuple(cells)
        else:
            raise GameRuleError(
                f"Illegal Othello move {action} ({self.action_to_string(action)}) "
                f"for {state.to_move.name} at move {state.move_count}"
            )

        return self._rebuild(board, state.to_move.opponent, state.move_count + 1)

    def disc_counts(self, state: GameState) -> Tuple[int, int]:
        """(FIRST discs, SECOND discs)."""
        return state.board.count(Player.FIRST), state.board.count(Player.SECOND)

    def _rebuild(self, board: Tuple[int, ...], to_move: Player, move_count: int) -> GameState:
        mover_can_move = bool(_flips_by_move(self.size, board, int(to_move)))
        other_can_move = bool(_flips_by_move(self.size, board, int(to_move.opponent)))
        terminal = not mover_can_move and not other_can_move

        winner = Player.EMPTY
        if terminal:
            first, second = board.count(Player.FIRST), board.count(Player.SECOND)
            if first > second:
                winner = Player.FIRST
            elif second > first:
                winner = Player.SECOND

        return GameState(
            game_id=self.game_id,
            board=board,
            to_move=to_move,
            move_count=move_count,
            terminal=terminal,
            winner=winner,
        )
