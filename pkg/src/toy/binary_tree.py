"""
Sparse-Reward Binary Tree

Tabular Q-learning on an n-level binary tree whose 2^n leaves pay
Bernoulli(p) rewards, exactly one leaf having p = 1. Three search-control
strategies decide where each training episode starts:

- none:   always the root
- random: with probability buffer_rate, a uniform draw from a FIFO buffer
          of visited non-terminal nodes
- regret: as random, but drawn in proportion to the node's regret
          |max_a M(s, a) - max_a Q(s, a)|, where M(s, a) is the running mean
          of the discounted returns observed after taking a in s

Nodes use heap indexing: root 0, children of i are 2i+1 (left) and 2i+2
(right); indices from 2^n - 1 on are leaves.

Greedy evaluation plays eval_games games from the root with random
tie-breaking and scores each by the expected value p of the leaf reached.
"""

from collections import deque
from dataclasses import dataclass, fields
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.stats import t as student_t

from src.utils.logger import get_logger

logger = get_logger(__name__)


class Strategy(str, Enum):
    NONE = 'none'
    RANDOM = 'random'
    REGRET = 'regret'


@dataclass(frozen=True)
class ToySettings:
    iterations: int = 6000
    eval_every: int = 100
    eval_games: int = 6000
    learning_rate: float = 0.1
    epsilon: float = 0.1
    discount: float = 0.1
    buffer_rate: float = 0.5
    buffer_capacity: int = 512
    suboptimal_reward_max: float = 0.5
    final_points: int = 10

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ToySettings":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


class BinaryTreeEnv:
    """
    Tree of `levels` decision levels with fixed leaf reward probabilities.

    Usage:
        env = BinaryTreeEnv.random(5, np.random.default_rng(0))
        q_star = env.optimal_q(discount=0.1)
    """

    def __init__(self, levels: int, leaf_probs: Sequence[float]):
        leaf_probs = np.asarray(leaf_probs, dtype=np.float64)
        if levels < 1:
            raise ValueError(f"levels must be >= 1, got {levels}")
        if leaf_probs.shape != (2 ** levels,):
            raise ValueError(f"expected {2 ** levels} leaf probabilities, got {leaf_probs.shape}")
        if np.any((leaf_probs < 0) | (leaf_probs > 1)):
            raise ValueError("leaf probabilities must lie in [0, 1]")
        if np.count_nonzero(leaf_probs == 1.0) != 1:
            raise ValueError("exactly one leaf must have p = 1")
        self.levels = levels
        self.leaf_probs = leaf_probs
        self.num_internal = 2 ** levels - 1

    @classmethod
    def random(cls, levels: int, rng: np.random.Generator,
               suboptimal_max: float = 0.5) -> "BinaryTreeEnv":
        """One uniformly placed p = 1 leaf, the others U[0, suboptimal_max]."""
        probs = rng.uniform(0.0, suboptimal_max, size=2 ** levels)
        probs[rng.integers(2 ** levels)] = 1.0
        return cls(levels, probs)

    def is_leaf(self, node: int) -> bool:
        return node >= self.num_internal

    def leaf_prob(self, node: int) -> float:
        return float(self.leaf_probs[node - self.num_internal])

    @staticmethod
    def child(node: int, action: int) -> int:
        return 2 * node + 1 + action

    def optimal_q(self, discount: float) -> np.ndarray:
        """Q*(s, a) for every internal node by backward induction."""
        q = np.zeros((self.num_internal, 2))
        for node in range(self.num_internal - 1, -1, -1):
            for action in (0, 1):
                c = self.child(node, action)
                q[node, action] = self.leaf_probs[c - self.num_internal] if self.is_leaf(c) \
                    else discount * q[c].max()
        return q


class QLearner:
    """Tabular epsilon-greedy Q-learning with return statistics for node regret."""

    def __init__(self, env: BinaryTreeEnv, settings: ToySettings, rng: np.random.Generator):
        self.env = env
        self.settings = settings
        self.rng = rng
        self.q = np.zeros((env.num_internal, 2))
        self.return_sum = np.zeros((env.num_internal, 2))
        self.return_count = np.zeros((env.num_internal, 2), dtype=np.int64)

    def greedy(self, node: int) -> int:
        q = self.q[node]
        if q[0] == q[1]:
            return int(self.rng.integers(2))
        return int(np.argmax(q))

    def act(self, node: int) -> int:
        if self.rng.random() < self.settings.epsilon:
            return int(self.rng.integers(2))
        return self.greedy(node)

    def episode(self, start: int) -> List[int]:
        """Run one episode from `start`; returns the internal nodes visited."""
        s = self.settings
        path: List[Tuple[int, int]] = []
        node = start
        while True:
            action = self.act(node)
            nxt = self.env.child(node, action)
            path.append((node, action))
            if self.env.is_leaf(nxt):
                reward = float(self.rng.random() < self.env.leaf_prob(nxt))
                self.q[node, action] += s.learning_rate * (reward - self.q[node, action])
                break
            target = s.discount * self.q[nxt].max()
            self.q[node, action] += s.learning_rate * (target - self.q[node, action])
            node = nxt

        # discounted return seen from each visited (node, action)
        g = reward
        for node, action in reversed(path):
            self.return_sum[node, action] += g
            self.return_count[node, action] += 1
            g *= s.discount
        return [node for node, _ in path]

    def node_regrets(self, nodes: np.ndarray) -> np.ndarray:
        """|max_a M(s, a) - max_a Q(s, a)| over observed actions; 0 if none observed."""
        counts = self.return_count[nodes]
        means = np.where(counts > 0, self.return_sum[nodes] / np.maximum(counts, 1), -np.inf)
        best_mean = means.max(axis=1)
        observed = np.isfinite(best_mean)
        regrets = np.zeros(len(nodes))
        regrets[observed] = np.abs(best_mean[observed] - self.q[nodes[observed]].max(axis=1))
        return regrets

    def evaluate(self, games: int) -> float:
        """Mean expected leaf value of greedy play from the root."""
        nodes = np.zeros(games, dtype=np.int64)
        for _ in range(self.env.levels):
            q = self.q[nodes]
            tie_break = self.rng.integers(0, 2, size=games)
            actions = np.where(q[:, 0] == q[:, 1], tie_break, np.argmax(q, axis=1))
            nodes = 2 * nodes + 1 + actions
        return float(self.env.leaf_probs[nodes - self.env.num_internal].mean())

    def root_value(self) -> float:
        return float(self.q[0].max())


def _start_node(strategy: Strategy, learner: QLearner, buffer: deque,
                rng: np.random.Generator, settings: ToySettings) -> int:
    if strategy is Strategy.NONE or not buffer or rng.random() >= settings.buffer_rate:
        return 0
    nodes = np.fromiter(buffer, dtype=np.int64)
    if strategy is Strategy.RANDOM:
        return int(nodes[rng.integers(len(nodes))])
    weights = learner.node_regrets(nodes)
    total = weights.sum()
    if total <= 0:
        return int(nodes[rng.integers(len(nodes))])
    return int(rng.choice(nodes, p=weights / total))


def toy_run(strategy: str, levels: int, seed: int,
            settings: Optional[ToySettings] = None,
            env: Optional[BinaryTreeEnv] = None) -> pd.DataFrame:
    """
    Train one Q-learner and record greedy reward and root Q-distance.

    The tree depends only on (seed, levels), so strategies sharing a seed
    face the same tree.

    Returns:
        Frame with columns iteration, reward, q_distance (one row per evaluation)
    """
    settings = settings or ToySettings()
    strategy = Strategy(strategy)
    if env is None:
        env = BinaryTreeEnv.random(levels, np.random.default_rng([seed, levels]),
                                   settings.suboptimal_reward_max)
    rng = np.random.default_rng([seed, levels, list(Strategy).index(strategy)])
    learner = QLearner(env, settings, rng)
    q_star_root = float(env.optimal_q(settings.discount)[0].max())
    buffer: deque = deque(maxlen=settings.buffer_capacity)

    rows = []
    for iteration in range(1, settings.iterations + 1):
        start = _start_node(strategy, learner, buffer, rng, settings)
        buffer.extend(learner.episode(start))
        if iteration % settings.eval_every == 0:
            rows.append({
                'iteration': iteration,
                'reward': learner.evaluate(settings.eval_games),
                'q_distance': abs(learner.root_value() - q_star_root),
            })
    return pd.DataFrame(rows, columns=['iteration', 'reward', 'q_distance'])


def toy_q_distance(strategy: str, levels: int, seed: int,
                   settings: Optional[ToySettings] = None) -> pd.DataFrame:
    """|max_a Q(root, a) - max_a Q*(root, a)| at every evaluation point."""
    return toy_run(strategy, levels, seed, settings)[['iteration', 'q_distance']]


def _tagged_run(strategy: str, levels: int, seed: int, settings: ToySettings) -> pd.DataFrame:
    df = toy_run(strategy, levels, seed, settings)
    df.insert(0, 'seed', seed)
    df.insert(0, 'levels', levels)
    df.insert(0, 'strategy', strategy)
    return df


def run_toy_experiment(levels: Sequence[int], seeds: int, settings: ToySettings,
                       strategies: Sequence[str] = tuple(s.value for s in Strategy),
                       n_jobs: int = 1) -> pd.DataFrame:
    """Every (strategy, levels, seed) run, concatenated in that order."""
    tasks = [(s, n, seed) for s in strategies for n in levels for seed in range(seeds)]
    logger.info(f"Toy experiment: {len(tasks)} runs of {settings.iterations} iterations")
    frames = Parallel(n_jobs=n_jobs)(delayed(_tagged_run)(s, n, seed, settings)
                                     for s, n, seed in tasks)
    return pd.concat(frames, ignore_index=True)


def _mean_ci(values: np.ndarray, level: float = 0.95) -> Tuple[float, float, float]:
    mean = float(np.mean(values))
    if len(values) < 2:
        return mean, mean, mean
    half = student_t.ppf(0.5 + level / 2, len(values) - 1) * np.std(values, ddof=1) / np.sqrt(len(values))
    return mean, mean - half, mean + half


def aggregate_runs(runs: pd.DataFrame) -> pd.DataFrame:
    """Per (strategy, levels, iteration): mean and 95% t-interval across seeds."""
    rows = []
    for (strategy, levels, iteration), group in runs.groupby(['strategy', 'levels', 'iteration'],
                                                             sort=True):
        row = {'strategy': strategy, 'levels': levels, 'iteration': iteration,
               'seeds': len(group)}
        for metric in ('reward', 'q_distance'):
            row[f'{metric}_mean'], row[f'{metric}_low'], row[f'{metric}_high'] = \
                _mean_ci(group[metric].to_numpy())
        rows.append(row)
    return pd.DataFrame(rows)


def final_scores(runs: pd.DataFrame, final_points: int = 10,
                 baseline: str = Strategy.NONE.value) -> pd.DataFrame:
    """
    Mean reward over the last `final_points` evaluations per run, summarised
    per (levels, strategy) with the paired-seed difference to `baseline`.
    """
    last = sorted(runs['iteration'].unique())[-final_points:]
    per_run = runs[runs['iteration'].isin(last)] \
        .groupby(['strategy', 'levels', 'seed'], sort=True)['reward'].mean().reset_index()

    rows = []
    for (levels, strategy), group in per_run.groupby(['levels', 'strategy'], sort=True):
        mean, low, high = _mean_ci(group['reward'].to_numpy())
        base = per_run[(per_run['levels'] == levels) & (per_run['strategy'] == baseline)]
        paired = group.merge(base, on=['levels', 'seed'], suffixes=('', '_base'))
        diff_mean, diff_low, diff_high = _mean_ci(
            (paired['reward'] - paired['reward_base']).to_numpy()
        ) if len(paired) else (np.nan, np.nan, np.nan)
        rows.append({'levels': levels, 'strategy': strategy, 'final_reward': mean,
                     'final_low': low, 'final_high': high,
                     'diff_vs_baseline': diff_mean, 'diff_low': diff_low, 'diff_high': diff_high})
    return pd.DataFrame(rows)
