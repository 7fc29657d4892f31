"""
Finite-Difference Gradient Check

Compares the analytic gradient of every head's loss (in isolation) and of
the combined loss against central differences, coordinate by coordinate,
on random small networks and random batches.

relative error = |analytic - numeric| / max(|analytic| + |numeric|, floor)
"""

from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from src.models.losses import HEADS, LossWeights, TrainBatch, evaluate_losses, loss_and_grads
from src.models.network import NetConfig, NetParams, init_params
from src.utils.logger import get_logger

logger = get_logger(__name__)

CHECKED = HEADS + ('total',)


@dataclass
class GradCheckResult:
    head: str
    trials: int
    max_relative_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_relative_error <= self.tolerance


def random_batch(config: NetConfig, batch_size: int, rng: np.random.Generator) -> TrainBatch:
    """Random inputs and targets; ranking groups partition the batch."""
    states = rng.integers(0, 2, size=(batch_size,) + config.input_shape).astype(np.float64)
    states += rng.normal(0.0, 0.1, size=states.shape)
    policy = rng.dirichlet(np.ones(config.action_size), size=batch_size)
    value = rng.choice([-1.0, 0.0, 1.0], size=batch_size)
    regret = rng.uniform(0.0, 4.0, size=batch_size)

    order = rng.permutation(batch_size)
    cut = int(rng.integers(1, batch_size)) if batch_size > 1 else batch_size
    groups = [order[:cut], order[cut:]]
    return TrainBatch(states, policy, value, regret, [g for g in groups if len(g) > 0])


def random_config(rng: np.random.Generator) -> NetConfig:
    """A tiny network; smooth activation so finite differences are meaningful."""
    torso = 'resnet' if rng.random() < 0.5 else 'mlp'
    size = int(rng.integers(2, 4))
    return NetConfig(in_planes=3, size=size, action_size=size * size + int(rng.integers(0, 2)),
                     torso=torso, blocks=1, filters=2, hidden=5, head_hidden=3,
                     activation='tanh')


def numeric_gradients(params: NetParams, batch: TrainBatch,
                      step: float = 1e-4) -> Dict[str, np.ndarray]:
    """Central differences of every head's loss (and the unit-weighted total)."""
    flat = params.flat()
    grads = {head: np.zeros_like(flat) for head in CHECKED}
    for i in range(flat.size):
        plus, minus = flat.copy(), flat.copy()
        plus[i] += step
        minus[i] -= step
        f_plus = evaluate_losses(NetParams.from_flat(params.config, plus), batch)
        f_minus = evaluate_losses(NetParams.from_flat(params.config, minus), batch)
        for head in CHECKED:
            grads[head][i] = (f_plus[head] - f_minus[head]) / (2.0 * step)
    return grads


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-4) -> float:
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_gradients(trials: int, seed: int = 0, tolerance: float = 1e-4,
                    step: float = 1e-4, batch_size: int = 4,
                    config: Optional[NetConfig] = None) -> List[GradCheckResult]:
    """
    Run the finite-difference suite.

    Args:
        trials: number of random (params, batch) draws
        seed: master seed; the suite is deterministic given it
        config: fixed network config (random tiny configs if None)

    Returns:
        One result per checked head ('policy', 'value', 'regret', 'rank', 'total')
    """
    rng = np.random.default_rng(seed)
    worst = {head: 0.0 for head in CHECKED}

    for trial in range(trials):
        cfg = config or random_config(rng)
        params = init_params(cfg, seed=int(rng.integers(0, 2**31)))
        # move away from the small output-layer init so every head has signal
        params = NetParams.from_flat(cfg, params.flat() + rng.normal(0.0, 0.3, size=params.num_params))
        batch = random_batch(cfg, batch_size, rng)

        numeric = numeric_gradients(params, batch, step)
        for head in CHECKED:
            weights = LossWeights() if head == 'total' else LossWeights().only(head)
            _, grads = loss_and_grads(params, batch, weights)
            analytic = np.concatenate([grads[n].ravel() for n in params.arrays])
            worst[head] = max(worst[head], relative_error(analytic, numeric[head]))

        logger.debug(f"Gradient check trial {trial + 1}/{trials}: "
                     + ", ".join(f"{h}={worst[h]:.2e}" for h in CHECKED))

    return [GradCheckResult(head, trials, worst[head], tolerance) for head in CHECKED]
