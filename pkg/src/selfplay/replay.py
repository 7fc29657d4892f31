"""
Iteration-windowed replay buffer and batch assembly.

The buffer keeps the decision states of the most recent `window`
iterations. Batches sample states uniformly across the window; the states
of one source game inside a batch form one ranking group (groups with a
single member are dropped).
"""

from collections import deque
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from src.games import get_game
from src.models.losses import TrainBatch
from src.selfplay.records import GameRecord
from src.selfplay.worker import WorkerOutput


@dataclass
class IterationSamples:
    """Games of one iteration with the number of leading states kept from each."""
    iteration: int
    records: List[GameRecord]
    kept: List[int]

    @property
    def size(self) -> int:
        return sum(self.kept)


class ReplayBuffer:
    """
    Ring of the last `window` iterations.

    Usage:
        replay = ReplayBuffer(window=20)
        replay.add_iteration(3, outputs)
        for batch in make_batches(replay, 256, rng, steps=50): ...
    """

    def __init__(self, window: int = 20):
        if window < 1:
            raise ValueError(f"window must be >= 1, got {window}")
        self.window = window
        self.iterations: deque = deque(maxlen=window)

    def add_iteration(self, iteration: int, outputs: List[WorkerOutput]) -> IterationSamples:
        records, kept = [], []
        for output in outputs:
            records.extend(output.records)
            kept.extend(output.kept)
        samples = IterationSamples(iteration, records, kept)
        self.iterations.append(samples)
        return samples

    def __len__(self) -> int:
        return sum(it.size for it in self.iterations)

    @property
    def iteration_ids(self) -> List[int]:
        return [it.iteration for it in self.iterations]

    def index(self) -> List[Tuple[GameRecord, int]]:
        """(record, decision index) for every retained state, oldest first."""
        return [(record, t)
                for it in self.iterations
                for record, k in zip(it.records, it.kept)
                for t in range(k)]


def build_batch(samples: List[Tuple[GameRecord, int]]) -> TrainBatch:
    """Assemble targets and per-game ranking groups for the given states."""
    game = get_game(samples[0][0].trajectory.records[0].state.game_id)
    states, policies, values, regrets = [], [], [], []
    groups: Dict[int, List[int]] = {}
    value_cache: Dict[int, np.ndarray] = {}

    for i, (record, t) in enumerate(samples):
        key = id(record)
        if key not in value_cache:
            value_cache[key] = record.value_targets()
        states.append(record.trajectory.records[t].state)
        policies.append(record.policy_targets[t])
        values.append(value_cache[key][t])
        regrets.append(record.regrets[t])
        groups.setdefault(key, []).append(i)

    return TrainBatch(
        states=game.encode_batch(states),
        policy_targets=np.stack(policies),
        value_targets=np.asarray(values),
        regret_targets=np.asarray(regrets),
        ranking_groups=[np.asarray(g) for g in groups.values() if len(g) >= 2],
    )


def make_batches(replay: ReplayBuffer, batch_size: int, rng: np.random.Generator,
                 steps: Optional[int] = None) -> Iterator[TrainBatch]:
    """
    Yield `steps` batches (forever if None) of states sampled uniformly
    across the window, without replacement inside a batch when possible.
    """
    index = replay.index()
    if not index:
        raise ValueError("make_batches called on an empty replay buffer")
    replace = batch_size > len(index)
    produced = 0
    while steps is None or produced < steps:
        picks = rng.choice(len(index), size=batch_size, replace=replace)
        yield build_batch([index[int(i)] for i in picks])
        produced += 1
