"""
Regret Computation and Ranking

Everything that turns a finished self-play game into search-control signal:

- Trajectory / MoveRecord: the decisions of one game with the MCTS value of
  each selected action and the final outcome
- compute_regret: mean squared gap between the selected-action values and
  the final outcome over the rest of the game
- ranking_distribution / ranking_loss: softmax over ranking scores and the
  regret-weighted log-sum-exp loss used to train the ranking head
- select_candidate: the single state of a game that is offered to the
  prioritized regret buffer

All functions are pure over immutable inputs.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, List, NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import log_softmax, logsumexp, softmax

from src.games.base import GameState, Player

REGRET_CLIP = 4.0


class RegretError(Exception):
    """Raised on regret queries that violate their contract."""
    pass


class Provenance(str, Enum):
    """Where a self-play game's opening came from."""
    INITIAL_STATE = 'initial'
    BUFFER = 'buffer'
    ARCHIVE = 'archive'


class CandidateSource(str, Enum):
    TRAJECTORY_STATE = 'trajectory'
    TREE_NODE = 'tree'


class NodeEstimate(NamedTuple):
    """A search-tree state with the regret heads' outputs cached at expansion."""
    state: GameState
    gamma: float
    regret_value: float


@dataclass(frozen=True)
class MoveRecord:
    """
    One decision of a self-play game.

    v_selected is the post-search Q of the chosen action, from the
    perspective of the player to move at `state`. gamma and regret_value are
    the root evaluation's ranking score and regret-value estimate.
    """
    state: GameState
    action: int
    v_selected: float
    visits: np.ndarray = field(repr=False)
    gamma: float = 0.0
    regret_value: float = 0.0

    @property
    def mover(self) -> Player:
        return self.state.to_move


@dataclass
class Trajectory:
    """
    Ordered decisions of one game.

    Attributes:
        records: decision states in play order (terminal state excluded)
        z: final outcome from the FIRST player's perspective, None while running
        opening: provenance of records[0].state
        opening_entry_id: buffer/archive entry the opening came from, if any
        opening_move_count: moves already on the board at the opening
        final_state: terminal position once the game is over
    """
    records: List[MoveRecord] = field(default_factory=list)
    z: Optional[int] = None
    opening: Provenance = Provenance.INITIAL_STATE
    opening_entry_id: Optional[int] = None
    opening_move_count: int = 0
    final_state: Optional[GameState] = None

    @property
    def finished(self) -> bool:
        return self.z is not None

    @property
    def last_index(self) -> int:
        return len(self.records) - 1

    def reference_values(self) -> np.ndarray:
        """v_selected converted to the FIRST player's perspective."""
        return np.array([
            r.v_selected if r.mover == Player.FIRST else -r.v_selected
            for r in self.records
        ], dtype=np.float64)


@dataclass(frozen=True)
class Candidate:
    """The state a finished game offers for restarting."""
    state: GameState
    gamma: float
    regret: float
    source: CandidateSource
    trajectory_index: Optional[int] = None


def _check_finished(traj: Trajectory) -> None:
    if not traj.finished:
        raise RegretError("Regret requested for an unfinished trajectory")
    if not traj.records:
        raise RegretError("Trajectory has no decision states")


def compute_regret(traj: Trajectory, t: int) -> float:
    """
    Regret of the state at decision index t.

    R(s_t) = mean over i = t..T of (V_selected(s_i) - z)^2, with both terms in
    the FIRST player's frame and T the last searched decision.

    Raises:
        RegretError: unfinished trajectory or t outside [0, T]
    """
    _check_finished(traj)
    if not 0 <= t <= traj.last_index:
        raise RegretError(f"Decision index {t} outside [0, {traj.last_index}]")
    errors = (traj.reference_values()[t:] - traj.z) ** 2
    return float(errors.mean())


def all_regrets(traj: Trajectory) -> np.ndarray:
    """compute_regret for every decision index, in one backward pass."""
    _check_finished(traj)
    errors = (traj.reference_values() - traj.z) ** 2
    tail_sums = np.cumsum(errors[::-1])[::-1]
    counts = np.arange(len(errors), 0, -1, dtype=np.float64)
    return tail_sums / counts


def ranking_distribution(scores: Sequence[float]) -> np.ndarray:
    """Softmax of ranking scores over one candidate set (max-subtracted)."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise RegretError("ranking_distribution needs at least one score")
    if not np.all(np.isfinite(scores)):
        raise RegretError("ranking scores must be finite")
    return softmax(scores)


def clip_regrets(regrets: Sequence[float]) -> np.ndarray:
    return np.clip(np.asarray(regrets, dtype=np.float64), 0.0, REGRET_CLIP)


def ranking_loss(scores: Sequence[float], regrets: Sequence[float]) -> float:
    """
    -log sum_s exp(log_softmax(gamma)_s + R(s)) over one candidate set.

    Equals -log sum_s rho(s) exp(R(s)); regrets are clipped to [0, 4].
    """
    scores = np.asarray(scores, dtype=np.float64)
    regrets = clip_regrets(regrets)
    if scores.shape != regrets.shape or scores.size == 0:
        raise RegretError(f"scores {scores.shape} and regrets {regrets.shape} must match and be nonempty")
    return float(-logsumexp(log_softmax(scores) + regrets))


def ranking_loss_grad(scores: Sequence[float], regrets: Sequence[float]) -> np.ndarray:
    """d ranking_loss / d gamma = softmax(gamma) - softmax(gamma + R)."""
    scores = np.asarray(scores, dtype=np.float64)
    regrets = clip_regrets(regrets)
    return softmax(scores) - softmax(scores + regrets)


def select_candidate(traj: Trajectory, tree_candidates: Iterable[NodeEstimate],
                     score_by: str = 'ranking') -> Candidate:
    """
    Pick the state with the globally highest score.

    Tree nodes are scanned first (in harvest order), then trajectory states;
    a later state replaces the current best only on a strictly higher score.
    Trajectory winners carry their computed regret, tree winners carry the
    regret-value head's estimate.

    Args:
        traj: finished trajectory
        tree_candidates: harvested nodes of every move's search, in move order
        score_by: 'ranking' (gamma) or 'regret_value' (ranking-head ablation)

    Raises:
        RegretError: unfinished or empty trajectory, unknown score_by, or every score is
            NaN or -inf
    """
    if score_by not in ('ranking', 'regret_value'):
        raise RegretError(f"score_by must be 'ranking' or 'regret_value', got {score_by!r}")
    _check_finished(traj)

    use_gamma = score_by == 'ranking'
    best: Optional[Candidate] = None
    best_score = -np.inf

    for node in tree_candidates:
        score = node.gamma if use_gamma else node.regret_value
        if score > best_score:
            best_score = score
            best = Candidate(node.state, float(node.gamma), max(0.0, float(node.regret_value)),
                             CandidateSource.TREE_NODE)

    regrets = all_regrets(traj)
    for t, record in enumerate(traj.records):
        score = record.gamma if use_gamma else record.regret_value
        if score > best_score:
            best_score = score
            best = Candidate(record.state, float(record.gamma), float(regrets[t]),
                             CandidateSource.TRAJECTORY_STATE, trajectory_index=t)

    if best is None:
        raise RegretError("Every candidate score is NaN or -inf")
    return best
