"""
Self-Play Workers

play_game runs one game under a restart store and performs the game's
single archive action once it ends:
- buffer-opened game: EMA update of the opening entry with the regret at
  the opening
- any other game under a PRB: offer the highest-scoring candidate
- GEVC: push the game's decision states
- GESC: push a uniform subsample of each move's search nodes

A SelfPlayWorker owns one RNG stream and one restart store and plays games
until its share of the iteration's state budget is collected. Workers of an
iteration run on a joblib thread pool and their results are merged in
worker order.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from src.control.archives import (
    CircularArchive,
    PrioritizedRegretBuffer,
    RestartPolicy,
    RestartVariant,
)
from src.control.regret import MoveRecord, Provenance, Trajectory, all_regrets, select_candidate
from src.models.network import NetParams
from src.search.mcts import MCTSConfig, harvest_candidates, search
from src.selfplay.records import GameRecord
from src.utils.logger import get_logger

logger = get_logger(__name__)


class SelfPlayError(Exception):
    """Raised when a self-play game runs past the move safety bound."""
    pass


@dataclass(frozen=True)
class SelfPlayConfig:
    mcts: MCTSConfig
    candidate_scoring: str = 'ranking'
    gesc_nodes_per_move: int = 1


def play_game(params: NetParams, policy: RestartPolicy, cfg: SelfPlayConfig,
              rng: np.random.Generator, iteration: int = 0, worker_id: int = 0,
              game_index: int = 0) -> GameRecord:
    """
    Play one self-play game from an opening drawn from `policy`.

    Raises:
        SelfPlayError: move count exceeds twice the number of board cells
    """
    game = policy.game
    opening = policy.draw_opening(rng)
    state = opening.state
    if state.terminal:
        raise SelfPlayError(f"Opening {game.state_to_string(state)} is already terminal")

    traj = Trajectory(opening=opening.provenance, opening_entry_id=opening.entry_id,
                      opening_move_count=state.move_count)
    targets = []
    tree_nodes = []
    gesc_states = []
    bound = 2 * game.num_cells

    while not state.terminal:
        if state.move_count > bound:
            raise SelfPlayError(
                f"Game exceeded {bound} moves (worker {worker_id}, iteration {iteration}, "
                f"opening {opening.provenance.value}): {game.state_to_string(state)}"
            )
        result = search(state, params, cfg.mcts, rng)
        traj.records.append(MoveRecord(
            state=state,
            action=result.selected_action,
            v_selected=result.v_selected,
            visits=result.visits,
            gamma=result.root_output.gamma,
            regret_value=result.root_output.regret_value,
        ))
        targets.append(result.visit_distribution)

        nodes = harvest_candidates(result)
        # roots are scanned as trajectory states
        tree_nodes.extend(nodes[1:])
        if policy.variant is RestartVariant.GESC:
            k = min(cfg.gesc_nodes_per_move, len(nodes))
            picks = rng.choice(len(nodes), size=k, replace=False)
            gesc_states.extend(nodes[int(i)].state for i in picks)

        state = game.apply(state, result.selected_action)

    traj.z = game.terminal_value(state).z
    traj.final_state = state
    regrets = all_regrets(traj)
    record = GameRecord(trajectory=traj, policy_targets=targets, regrets=regrets,
                        iteration=iteration, worker_id=worker_id, game_index=game_index)

    if isinstance(policy, PrioritizedRegretBuffer):
        if opening.provenance is Provenance.BUFFER:
            old = policy.get(opening.entry_id).regret
            new = policy.ema_update(opening.entry_id, float(regrets[0]))
            record.ema = (old, new)
        else:
            record.candidate = select_candidate(traj, tree_nodes, cfg.candidate_scoring)
            record.inserted = policy.offer(record.candidate)
    elif isinstance(policy, CircularArchive):
        pushed = record.states if policy.variant is RestartVariant.GEVC else gesc_states
        policy.push(pushed)
        record.archive_pushes = len(pushed)

    logger.debug(f"Worker {worker_id} game {game_index}: {record.length} moves, z={traj.z}, "
                 f"opening {opening.provenance.value} at move {traj.opening_move_count}")
    return record


@dataclass
class WorkerOutput:
    """One worker's games for an iteration; the last game may be cut to fit the budget."""
    worker_id: int
    records: List[GameRecord]
    kept: List[int]

    @property
    def samples(self) -> int:
        return sum(self.kept)


class SelfPlayWorker:
    """
    Self-play actor with its own RNG stream and restart store.

    Usage:
        worker = SelfPlayWorker(0, policy, cfg, seed_sequence)
        output = worker.run_iteration(params, iteration=1, budget=1000)
    """

    def __init__(self, worker_id: int, policy: RestartPolicy, cfg: SelfPlayConfig,
                 seed: np.random.SeedSequence):
        self.worker_id = worker_id
        self.policy = policy
        self.cfg = cfg
        self.rng = np.random.default_rng(seed)
        self.games_played = 0

    def play(self, params: NetParams, iteration: int) -> GameRecord:
        record = play_game(params, self.policy, self.cfg, self.rng, iteration,
                           self.worker_id, self.games_played)
        self.games_played += 1
        return record

    def run_iteration(self, params: NetParams, iteration: int, budget: int) -> WorkerOutput:
        """Play until `budget` decision states are collected."""
        records, kept, collected = [], [], 0
        while collected < budget:
            record = self.play(params, iteration)
            take = min(record.length, budget - collected)
            records.append(record)
            kept.append(take)
            collected += take
        return WorkerOutput(self.worker_id, records, kept)

    def play_games(self, params: NetParams, iteration: int, count: int) -> WorkerOutput:
        """Play a fixed number of games (buffer warm-up and the frozen-backbone phase)."""
        records = [self.play(params, iteration) for _ in range(count)]
        return WorkerOutput(self.worker_id, records, [r.length for r in records])

    def get_state(self) -> dict:
        return {'rng': self.rng.bit_generator.state, 'games_played': self.games_played}

    def set_state(self, state: dict) -> None:
        self.rng.bit_generator.state = state['rng']
        self.games_played = int(state['games_played'])


def split_budget(total: int, workers: int) -> List[int]:
    """Even split of `total` states; the first total % workers workers take one more."""
    base, extra = divmod(total, workers)
    return [base + (1 if w < extra else 0) for w in range(workers)]


def run_workers(workers: Sequence[SelfPlayWorker], params: NetParams, iteration: int,
                budget: Optional[int] = None, games: Optional[int] = None) -> List[WorkerOutput]:
    """
    Fan an iteration out over the workers and join.

    Exactly one of `budget` (total decision states) or `games` (total games)
    is given.
    """
    if (budget is None) == (games is None):
        raise SelfPlayError("run_workers needs exactly one of budget or games")
    shares = split_budget(budget if budget is not None else games, len(workers))
    if budget is not None:
        tasks = (delayed(w.run_iteration)(params, iteration, s) for w, s in zip(workers, shares))
    else:
        tasks = (delayed(w.play_games)(params, iteration, s) for w, s in zip(workers, shares))
    outputs = Parallel(n_jobs=len(workers), backend='threading')(tasks)
    return sorted(outputs, key=lambda o: o.worker_id)
