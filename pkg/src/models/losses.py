"""
Training Losses

total = w_p * CE(policy, visit target)
      + w_v * MSE(value, z)
      + w_r * MSE(regret_value, R)
      + w_rank * sum over ranking groups of the regret ranking loss

CE and the MSE terms are batch means; the ranking term is summed over the
groups of the batch.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np
from scipy.special import log_softmax

from src.control.regret import ranking_loss, ranking_loss_grad
from src.models.network import NetOutputBatch, NetParams, backward, forward_batch

HEADS = ('policy', 'value', 'regret', 'rank')


class LossComputationError(Exception):
    """Raised for malformed training batches and non-finite head losses."""
    pass


@dataclass(frozen=True)
class LossWeights:
    policy: float = 1.0
    value: float = 1.0
    regret: float = 1.0
    rank: float = 1.0

    def only(self, head: str) -> "LossWeights":
        """Weights isolating one head (used by gradient checks)."""
        return LossWeights(**{h: (1.0 if h == head else 0.0) for h in HEADS})


@dataclass
class TrainBatch:
    """
    One optimisation batch.

    Attributes:
        states: encoded inputs (B, planes, size, size)
        policy_targets: MCTS visit distributions over the action space (B, A)
        value_targets: final outcome from each state's mover's perspective (B,)
        regret_targets: computed regrets, >= 0 (B,)
        ranking_groups: index arrays, disjoint; one group per source game
    """
    states: np.ndarray
    policy_targets: np.ndarray
    value_targets: np.ndarray
    regret_targets: np.ndarray
    ranking_groups: List[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        self.policy_targets = np.asarray(self.policy_targets, dtype=np.float64)
        self.value_targets = np.asarray(self.value_targets, dtype=np.float64)
        self.regret_targets = np.asarray(self.regret_targets, dtype=np.float64)
        self.ranking_groups = [np.asarray(g, dtype=int) for g in self.ranking_groups]

        n = len(self.states)
        if n == 0:
            raise LossComputationError("TrainBatch must not be empty")
        for name in ('policy_targets', 'value_targets', 'regret_targets'):
            if len(getattr(self, name)) != n:
                raise LossComputationError(f"{name} has {len(getattr(self, name))} rows, expected {n}")
        if np.any(self.regret_targets < 0):
            raise LossComputationError("regret targets must be nonnegative")
        seen = set()
        for group in self.ranking_groups:
            members = set(group.tolist())
            if members & seen:
                raise LossComputationError("a state belongs to more than one ranking group")
            seen |= members

    def __len__(self) -> int:
        return len(self.states)


def _head_losses(out: NetOutputBatch, batch: TrainBatch) -> Dict[str, float]:
    n = len(batch)
    losses = {
        'policy': float(-(batch.policy_targets * log_softmax(out.logits, axis=1)).sum() / n),
        'value': float(np.mean((out.value - batch.value_targets) ** 2)),
        'regret': float(np.mean((out.regret_value - batch.regret_targets) ** 2)),
        'rank': float(sum(ranking_loss(out.gamma[g], batch.regret_targets[g])
                          for g in batch.ranking_groups)),
    }
    for head in HEADS:
        if not np.isfinite(losses[head]):
            raise LossComputationError(f"Non-finite loss in the '{head}' head: {losses[head]}")
    return losses


def loss_and_grads(params: NetParams, batch: TrainBatch,
                   weights: LossWeights = LossWeights()) -> Tuple[Dict[str, float], Dict[str, np.ndarray]]:
    """
    Per-head losses, weighted total and the gradient of the total.

    Returns:
        (losses, grads): losses has keys policy, value, regret, rank, total;
        grads is keyed like params.arrays

    Raises:
        LossComputationError: a head's loss is NaN or infinite
    """
    out, cache = forward_batch(params, batch.states, keep_cache=True)
    losses = _head_losses(out, batch)
    losses['total'] = sum(getattr(weights, h) * losses[h] for h in HEADS)

    n = len(batch)
    target_mass = batch.policy_targets.sum(axis=1, keepdims=True)
    dlogits = weights.policy * (out.policy * target_mass - batch.policy_targets) / n
    dvalue = weights.value * 2.0 * (out.value - batch.value_targets) / n
    dregret = weights.regret * 2.0 * (out.regret_value - batch.regret_targets) / n
    dgamma = np.zeros(n)
    for group in batch.ranking_groups:
        dgamma[group] += ranking_loss_grad(out.gamma[group], batch.regret_targets[group])

    grads = backward(params, cache, dlogits, dvalue, dregret, weights.rank * dgamma, out.regret_pre)
    return losses, grads


def evaluate_losses(params: NetParams, batch: TrainBatch,
                    weights: LossWeights = LossWeights()) -> Dict[str, float]:
    """Per-head losses and weighted total, forward pass only."""
    out, _ = forward_batch(params, batch.states)
    losses = _head_losses(out, batch)
    losses['total'] = sum(getattr(weights, h) * losses[h] for h in HEADS)
    return losses
