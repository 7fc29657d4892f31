"""
Hex

FIRST connects the top row to the bottom row, SECOND connects the left
column to the right column. No swap rule; Hex has no draws.
"""

from collections import deque
from typing import List, Tuple

from src.games.base import Game, GameRuleError, GameState, Player

NEIGHBOURS = [(-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0)]


class HexGame(Game):
    """n x n Hex; action index = row * n + col."""

    name = "hex"

    @property
    def action_size(self) -> int:
        return self.num_cells

    @property
    def max_game_length(self) -> int:
        return self.num_cells

    def initial_state(self) -> GameState:
        return GameState(
            game_id=self.game_id,
            board=(int(Player.EMPTY),) * self.num_cells,
            to_move=Player.FIRST,
        )

    def legal_actions(self, state: GameState) -> List[int]:
        self._check_game(state)
        if state.terminal:
            raise GameRuleError("legal_actions called on a finished Hex game")
        return [i for i, cell in enumerate(state.board) if cell == Player.EMPTY]

    def apply(self, state: GameState, action: int) -> GameState:
        self._check_game(state)
        if state.terminal:
            raise GameRuleError(f"Cannot play {action} in a finished Hex game")
        if not 0 <= action < self.num_cells or state.board[action] != Player.EMPTY:
            raise GameRuleError(
                f"Illegal Hex move {action} ({self.action_to_string(action)}) "
                f"for {state.to_move.name} at move {state.move_count}"
            )

        board = list(state.board)
        board[action] = int(state.to_move)
        board = tuple(board)
        won = self.has_connection(board, state.to_move)

        return GameState(
            game_id=self.game_id,
            board=board,
            to_move=state.to_move.opponent,
            move_count=state.move_count + 1,
            terminal=won,
            winner=state.to_move if won else Player.EMPTY,
        )

    def has_connection(self, board: Tuple[int, ...], player: Player) -> bool:
        """Breadth-first search from the player's starting edge."""
        n = self.size
        seen = set()
        queue = deque()

        if player == Player.FIRST:
            starts = [(0, c) for c in range(n)]
            def is_goal(r, c): return r == n - 1
        else:
            starts = [(r, 0) for r in range(n)]
            def is_goal(r, c): return c == n - 1

        for r, c in starts:
            if board[r * n + c] == player:
                seen.add((r, c))
                queue.append((r, c))

        while queue:
            r, c = queue.popleft()
            if is_goal(r, c):
                return True
            for dr, dc in NEIGHBOURS:
                nr, nc = r + dr, c + dc
                if 0 <= nr < n and 0 <= nc < n and (nr, nc) not in seen \
                        and board[nr * n + nc] == player:
                    seen.add((nr, nc))
                    queue.append((nr, nc))
        return False

    def _rebuild(self, board: Tuple[int, ...], to_move: Player, move_count: int) -> GameState:
        winner = Player.EMPTY
        for player in (Player.FIRST, Player.SECOND):
            if self.has_connection(board, player):
                if winner != Player.EMPTY:
                    raise GameRuleError("Both Hex players have a connecting chain")
                winner = player
        return GameState(
            game_id=self.game_id,
            board=board,
            to_move=to_move,
            move_count=move_count,
            terminal=winner != Player.EMPTY,
            winner=winner,
        )
