"""
SGD with momentum and weight decay.

velocity <- momentum * velocity + (grad + weight_decay * w)
w        <- w - lr * velocity

A `trainable` predicate freezes parameters: their update, decay included,
is zero and their velocity stays untouched.
"""

from typing import Callable, Dict, Optional, Tuple

import numpy as np

from src.models.network import NetParams, REGRET_HEAD_PREFIXES


class OptimizerError(Exception):
    """Raised on non-finite gradients or parameters."""
    pass


def regret_heads_only(name: str) -> bool:
    """Trainable predicate for the frozen-backbone phase."""
    return name.startswith(REGRET_HEAD_PREFIXES)


def sgd_step(params: NetParams, gradient: Dict[str, np.ndarray], lr: float,
             momentum: float, weight_decay: float,
             velocity: Optional[Dict[str, np.ndarray]] = None,
             trainable: Optional[Callable[[str], bool]] = None
             ) -> Tuple[NetParams, Dict[str, np.ndarray]]:
    """
    One classical-momentum step.

    Args:
        params: current snapshot
        gradient: dict keyed like params.arrays
        velocity: previous momentum buffers (zeros if None)
        trainable: predicate on parameter names; None trains everything

    Returns:
        (new snapshot, new velocity)

    Raises:
        OptimizerError: non-finite gradient in, or non-finite parameter out
    """
    if velocity is None:
        velocity = {n: np.zeros_like(a) for n, a in params.arrays.items()}

    new_arrays, new_velocity = {}, {}
    for name, w in params.arrays.items():
        g = gradient[name]
        if not np.all(np.isfinite(g)):
            raise OptimizerError(f"Non-finite gradient for parameter '{name}'")
        if trainable is not None and not trainable(name):
            new_arrays[name] = w
            new_velocity[name] = velocity[name]
            continue
        v = momentum * velocity[name] + (g + weight_decay * w)
        updated = w - lr * v
        if not np.all(np.isfinite(updated)):
            raise OptimizerError(f"Parameter '{name}' became non-finite after the step")
        new_arrays[name] = updated
        new_velocity[name] = v

    return params.replace(new_arrays), new_velocity


class SGDOptimizer:
    """
    Stateful wrapper around sgd_step.

    Usage:
        opt = SGDOptimizer(lr=0.02, momentum=0.9, weight_decay=1e-4)
        params = opt.step(params, grads)
    """

    def __init__(self, lr: float, momentum: float, weight_decay: float,
                 velocity: Optional[Dict[str, np.ndarray]] = None,
                 trainable: Optional[Callable[[str], bool]] = None):
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = velocity
        self.trainable = trainable
        self.steps = 0

    def step(self, params: NetParams, gradient: Dict[str, np.ndarray]) -> NetParams:
        params, self.velocity = sgd_step(params, gradient, self.lr, self.momentum,
                                         self.weight_decay, self.velocity, self.trainable)
        self.steps += 1
        return params

    def flat_velocity(self, params: NetParams) -> np.ndarray:
        if self.velocity is None:
            return np.zeros(params.num_params)
        return np.concatenate([self.velocity[n].ravel() for n in params.arrays])

    def load_flat_velocity(self, params: NetParams, vector: np.ndarray) -> None:
        self.velocity, offset = {}, 0
        for name, arr in params.arrays.items():
            self.velocity[name] = np.asarray(vector[offset:offset + arr.size]).reshape(arr.shape).copy()
            offset += arr.size
