"""
PUCT Monte Carlo Tree Search

One search per move:
1. Expand the root with one network call (Dirichlet noise on its priors in
   self-play)
2. Run `simulations` iterations: descend by argmax Q + U, expand the first
   unexpanded child with one network call (terminal children back up the
   exact outcome), back up negamax values
3. Pick the move from the root visit counts and read V_selected, the
   post-search Q of the chosen edge from the root mover's perspective

Every network-evaluated node keeps the ranking score and regret-value
estimate of its expansion, so candidate scanning after the game needs no
further inference.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import orjson

from src.control.regret import NodeEstimate
from src.games import get_game
from src.games.base import Game, GameRuleError, GameState
from src.models.network import NetOutput, NetParams, forward
from src.utils.logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class MCTSConfig:
    """
    Search settings.

    dirichlet_alpha None means 10 / board cells.
    """
    simulations: int = 50
    c_puct: float = 1.5
    dirichlet_alpha: Optional[float] = None
    noise_ratio: float = 0.25
    temperature: float = 1.0
    is_selfplay: bool = True

    def alpha_for(self, game: Game) -> float:
        return self.dirichlet_alpha if self.dirichlet_alpha is not None else 10.0 / game.num_cells


class SearchNode:
    """
    Tree node. Edge statistics are indexed like `actions` and stored from
    the perspective of the player to move at this node.
    """

    __slots__ = ('state', 'actions', 'priors', 'visits', 'value_sum',
                 'children', 'output', 'leaf_value')

    def __init__(self, state: GameState, game: Game, params: NetParams):
        self.state = state
        self.children: Dict[int, "SearchNode"] = {}
        self.output: Optional[NetOutput] = None

        outcome = game.terminal_value(state)
        if outcome is not None:
            self.actions = np.zeros(0, dtype=int)
            self.priors = np.zeros(0)
            self.leaf_value = float(outcome.for_player(state.to_move))
        else:
            self.output = forward(params, game.encode(state))[0]
            self.actions = np.asarray(game.legal_actions(state), dtype=int)
            priors = self.output.policy[self.actions]
            total = priors.sum()
            self.priors = priors / total if total > 0 else np.full(len(self.actions), 1.0 / len(self.actions))
            self.leaf_value = self.output.value

        self.visits = np.zeros(len(self.actions), dtype=np.int64)
        self.value_sum = np.zeros(len(self.actions))

    @property
    def is_terminal(self) -> bool:
        return self.output is None

    def q_values(self) -> np.ndarray:
        """W/N for visited edges, 0 otherwise."""
        q = np.zeros(len(self.actions))
        seen = self.visits > 0
        q[seen] = self.value_sum[seen] / self.visits[seen]
        return q

    def select(self, c_puct: float) -> int:
        """Index (into self.actions) maximizing Q + c * P * sqrt(sum N) / (1 + N)."""
        u = c_puct * self.priors * np.sqrt(self.visits.sum()) / (1.0 + self.visits)
        return int(np.argmax(self.q_values() + u))

    def estimate(self) -> NodeEstimate:
        return NodeEstimate(self.state, self.output.gamma, self.output.regret_value)


@dataclass
class SearchResult:
    """
    Outcome of one search.

    Attributes:
        root: the searched position
        visits: root visit counts over the full action space
        q: root edge Q values over the full action space (root mover's view)
        root_output: network evaluation of the root
        expanded_nodes: every network-evaluated node of this search, root first
        selected_action: chosen move (None until selected)
        v_selected: Q of the chosen edge
    """
    root: GameState
    visits: np.ndarray
    q: np.ndarray
    root_output: NetOutput
    expanded_nodes: List[NodeEstimate] = field(default_factory=list)
    selected_action: Optional[int] = None
    v_selected: Optional[float] = None

    @property
    def simulations(self) -> int:
        return int(self.visits.sum())

    @property
    def visit_distribution(self) -> np.ndarray:
        total = self.visits.sum()
        return self.visits / total if total > 0 else self.visits.astype(np.float64)

    def value_of(self, action: int) -> float:
        if self.visits[action] == 0:
            return float(self.root_output.value)
        return float(self.q[action])

    def to_debug_dict(self) -> dict:
        game = get_game(self.root.game_id)
        visited = np.flatnonzero(self.visits)
        return {
            'root': game.state_to_string(self.root),
            'simulations': self.simulations,
            'root_value': self.root_output.value,
            'edges': [
                {'action': game.action_to_string(int(a)), 'index': int(a),
                 'visits': int(self.visits[a]), 'q': float(self.q[a])}
                for a in visited
            ],
            'selected_action': self.selected_action,
            'v_selected': self.v_selected,
            'expanded_nodes': len(self.expanded_nodes),
        }


def select_action(result: SearchResult, temperature: float,
                  rng: Optional[np.random.Generator] = None) -> int:
    """
    Sample an action with probability proportional to N(a)^(1/temperature).

    temperature 0 picks the most visited action, lowest index on ties.
    """
    visits = result.visits.astype(np.float64)
    if temperature <= 0 or visits.sum() == 0:
        return int(np.argmax(visits))
    rng = rng if rng is not None else np.random.default_rng()
    probs = np.zeros_like(visits)
    seen = visits > 0
    logs = np.log(visits[seen]) / temperature
    probs[seen] = np.exp(logs - logs.max())
    probs /= probs.sum()
    return int(rng.choice(len(probs), p=probs))


def search(root: GameState, params: NetParams, cfg: MCTSConfig,
           rng: Optional[np.random.Generator] = None) -> SearchResult:
    """
    Run PUCT search from `root` and select a move.

    Args:
        root: non-terminal position
        params: network snapshot (read only)
        cfg: search settings; cfg.is_selfplay adds root Dirichlet noise
        rng: randomness for noise and move sampling

    Returns:
        SearchResult with the selected action and its V_selected
    """
    game = get_game(root.game_id)
    if root.terminal:
        raise GameRuleError("search called on a terminal position")
    rng = rng if rng is not None else np.random.default_rng()

    root_node = SearchNode(root, game, params)
    expanded = [root_node.estimate()]

    if cfg.is_selfplay and cfg.noise_ratio > 0 and len(root_node.actions) > 1:
        noise = rng.dirichlet(np.full(len(root_node.actions), cfg.alpha_for(game)))
        root_node.priors = (1.0 - cfg.noise_ratio) * root_node.priors + cfg.noise_ratio * noise

    for _ in range(cfg.simulations):
        node = root_node
        path = []
        while True:
            idx = node.select(cfg.c_puct)
            path.append((node, idx))
            action = int(node.actions[idx])
            child = node.children.get(action)
            if child is None:
                child = SearchNode(game.apply(node.state, action), game, params)
                node.children[action] = child
                if not child.is_terminal:
                    expanded.append(child.estimate())
                break
            if child.is_terminal:
                break
            node = child

        # value is from the perspective of the player to move at the leaf
        value = child.leaf_value
        for parent, idx in reversed(path):
            value = -value
            parent.visits[idx] += 1
            parent.value_sum[idx] += value

    visits = np.zeros(game.action_size, dtype=np.int64)
    q = np.zeros(game.action_size)
    visits[root_node.actions] = root_node.visits
    q[root_node.actions] = root_node.q_values()

    result = SearchResult(root=root, visits=visits, q=q,
                          root_output=root_node.output, expanded_nodes=expanded)
    action = select_action(result, cfg.temperature, rng)
    result.selected_action = action
    result.v_selected = result.value_of(action)
    return result


def harvest_candidates(result: SearchResult) -> List[NodeEstimate]:
    """All nodes expanded by the search with their cached regret-head outputs."""
    return list(result.expanded_nodes)


def dump_search_debug(result: SearchResult, path: Path) -> Path:
    """Write the root statistics of one search as JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(orjson.dumps(result.to_debug_dict(), option=orjson.OPT_INDENT_2))
    logger.debug(f"Search debug dump written to {path}")
    return path
