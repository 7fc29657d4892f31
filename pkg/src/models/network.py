"""
Four-Head Network

A compact policy / value / regret-value / regret-ranking network with
hand-written forward and backward passes in numpy.

Torso options:
- 'mlp': two fully connected layers over the flattened input planes
- 'resnet': a 3x3 convolution stem followed by `blocks` residual blocks
  (conv-act-conv + skip, act); convolutions use im2col

Heads (all read the flattened torso features):
- policy: linear logits over the full action space
- value: hidden layer -> tanh, in [-1, 1]
- regret: hidden layer -> softplus, >= 0
- rank: hidden layer -> linear score gamma

Parameters live in an immutable NetParams snapshot; gradients are plain
dicts with the same keys and shapes.
"""

from dataclasses import dataclass, field, asdict
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit, softmax

from src.utils.logger import get_logger

logger = get_logger(__name__)

SCALAR_HEADS = ('value', 'regret', 'rank')
REGRET_HEAD_PREFIXES = ('regret.', 'rank.')


class NetworkConfigError(Exception):
    """Raised when inputs or parameters do not match the network config."""
    pass


@dataclass(frozen=True)
class NetConfig:
    """Network topology. Parameter count is a pure function of this."""
    in_planes: int
    size: int
    action_size: int
    torso: str = 'resnet'
    blocks: int = 1
    filters: int = 32
    hidden: int = 64
    head_hidden: int = 32
    activation: str = 'relu'

    def __post_init__(self):
        if self.torso not in ('mlp', 'resnet'):
            raise NetworkConfigError(f"torso must be 'mlp' or 'resnet', got {self.torso!r}")
        if self.activation not in ('relu', 'tanh'):
            raise NetworkConfigError(f"activation must be 'relu' or 'tanh', got {self.activation!r}")
        if self.torso == 'resnet' and not 1 <= self.blocks <= 3:
            raise NetworkConfigError(f"resnet torso supports 1-3 blocks, got {self.blocks}")
        for name in ('in_planes', 'size', 'action_size', 'filters', 'hidden', 'head_hidden'):
            if getattr(self, name) < 1:
                raise NetworkConfigError(f"{name} must be positive")

    @property
    def input_shape(self) -> Tuple[int, int, int]:
        return (self.in_planes, self.size, self.size)

    @property
    def feature_dim(self) -> int:
        if self.torso == 'mlp':
            return self.hidden
        return self.filters * self.size * self.size

    def to_dict(self) -> Dict:
        return asdict(self)


def param_shapes(config: NetConfig) -> Dict[str, Tuple[int, ...]]:
    """Ordered parameter names and shapes; the order defines the flat layout."""
    shapes = {}
    if config.torso == 'mlp':
        d_in = int(np.prod(config.input_shape))
        shapes['torso.fc1.W'] = (d_in, config.hidden)
        shapes['torso.fc1.b'] = (config.hidden,)
        shapes['torso.fc2.W'] = (config.hidden, config.hidden)
        shapes['torso.fc2.b'] = (config.hidden,)
    else:
        f = config.filters
        shapes['torso.stem.W'] = (f, config.in_planes, 3, 3)
        shapes['torso.stem.b'] = (f,)
        for i in range(config.blocks):
            for conv in ('conv1', 'conv2'):
                shapes[f'torso.block{i}.{conv}.W'] = (f, f, 3, 3)
                shapes[f'torso.block{i}.{conv}.b'] = (f,)

    feat = config.feature_dim
    shapes['policy.W'] = (feat, config.action_size)
    shapes['policy.b'] = (config.action_size,)
    for head in SCALAR_HEADS:
        shapes[f'{head}.fc.W'] = (feat, config.head_hidden)
        shapes[f'{head}.fc.b'] = (config.head_hidden,)
        shapes[f'{head}.out.W'] = (config.head_hidden, 1)
        shapes[f'{head}.out.b'] = (1,)
    return shapes


@dataclass(frozen=True)
class NetParams:
    """
    Immutable parameter snapshot.

    Arrays are copied and marked read-only on construction, so a snapshot
    handed to self-play workers cannot change under them.
    """
    config: NetConfig
    arrays: Mapping[str, np.ndarray] = field(repr=False)

    def __post_init__(self):
        shapes = param_shapes(self.config)
        if set(self.arrays) != set(shapes):
            missing = set(shapes) - set(self.arrays)
            extra = set(self.arrays) - set(shapes)
            raise NetworkConfigError(f"Parameter names mismatch: missing={missing}, extra={extra}")
        frozen = {}
        for name, shape in shapes.items():
            arr = np.array(self.arrays[name], dtype=np.float64, copy=True)
            if arr.shape != shape:
                raise NetworkConfigError(f"{name}: expected shape {shape}, got {arr.shape}")
            arr.setflags(write=False)
            frozen[name] = arr
        object.__setattr__(self, 'arrays', frozen)

    @property
    def num_params(self) -> int:
        return sum(a.size for a in self.arrays.values())

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays.values()])

    @classmethod
    def from_flat(cls, config: NetConfig, vector: np.ndarray) -> "NetParams":
        shapes = param_shapes(config)
        total = sum(int(np.prod(s)) for s in shapes.values())
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (total,):
            raise NetworkConfigError(f"Flat vector has {vector.size} entries, config needs {total}")
        arrays, offset = {}, 0
        for name, shape in shapes.items():
            n = int(np.prod(shape))
            arrays[name] = vector[offset:offset + n].reshape(shape)
            offset += n
        return cls(config, arrays)

    def replace(self, arrays: Mapping[str, np.ndarray]) -> "NetParams":
        """New snapshot with some arrays swapped out."""
        merged = dict(self.arrays)
        merged.update(arrays)
        return NetParams(self.config, merged)


def init_params(config: NetConfig, seed: int = 0) -> NetParams:
    """He (relu) or LeCun (tanh) normal initialization, zero biases."""
    rng = np.random.default_rng(seed)
    gain = 2.0 if config.activation == 'relu' else 1.0
    arrays = {}
    for name, shape in param_shapes(config).items():
        if name.endswith('.b'):
            arrays[name] = np.zeros(shape)
            continue
        fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else shape[0]
        std = np.sqrt(gain / fan_in)
        if name.startswith('policy.') or name.endswith('.out.W'):
            std *= 0.1
        arrays[name] = rng.normal(0.0, std, size=shape)
    params = NetParams(config, arrays)
    logger.debug(f"Initialized {config.torso} network with {params.num_params} parameters")
    return params


def zero_params(config: NetConfig) -> NetParams:
    return NetParams(config, {n: np.zeros(s) for n, s in param_shapes(config).items()})


def zero_grads(params: NetParams) -> Dict[str, np.ndarray]:
    return {n: np.zeros_like(a) for n, a in params.arrays.items()}


@dataclass(frozen=True)
class NetOutput:
    """Evaluation of a single state."""
    policy: np.ndarray
    value: float
    regret_value: float
    gamma: float


@dataclass
class NetOutputBatch:
    """Batched head outputs plus pre-activations needed by the losses."""
    logits: np.ndarray
    policy: np.ndarray
    value: np.ndarray
    regret_value: np.ndarray
    regret_pre: np.ndarray
    gamma: np.ndarray

    def items(self) -> List[NetOutput]:
        return [
            NetOutput(self.policy[i], float(self.value[i]),
                      float(self.regret_value[i]), float(self.gamma[i]))
            for i in range(len(self.value))
        ]


# ---------------------------------------------------------------------------
# layer primitives
# ---------------------------------------------------------------------------

def _act(x: np.ndarray, kind: str) -> np.ndarray:
    return np.maximum(x, 0.0) if kind == 'relu' else np.tanh(x)


def _act_grad(out: np.ndarray, kind: str) -> np.ndarray:
    """Derivative expressed through the activation output."""
    return (out > 0.0).astype(out.dtype) if kind == 'relu' else 1.0 - out * out


def _im2col(x: np.ndarray) -> np.ndarray:
    """(B, C, H, W) -> (B*H*W, C*9) patches for a same-padded 3x3 conv."""
    b, c, h, w = x.shape
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    windows = sliding_window_view(padded, (3, 3), axis=(2, 3))
    return windows.transpose(0, 2, 3, 1, 4, 5).reshape(b * h * w, c * 9)


def _col2im(dcols: np.ndarray, shape: Tuple[int, int, int, int]) -> np.ndarray:
    b, c, h, w = shape
    d = dcols.reshape(b, h, w, c, 3, 3)
    dpadded = np.zeros((b, c, h + 2, w + 2))
    for i in range(3):
        for j in range(3):
            dpadded[:, :, i:i + h, j:j + w] += d[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dpadded[:, :, 1:h + 1, 1:w + 1]


def _conv_forward(x, weight, bias):
    b, _, h, w = x.shape
    f = weight.shape[0]
    cols = _im2col(x)
    out = cols @ weight.reshape(f, -1).T + bias
    return out.reshape(b, h, w, f).transpose(0, 3, 1, 2), cols


def _conv_backward(dout, cols, x_shape, weight):
    f = weight.shape[0]
    d2 = dout.transpose(0, 2, 3, 1).reshape(-1, f)
    dweight = (d2.T @ cols).reshape(weight.shape)
    dbias = d2.sum(axis=0)
    dx = _col2im(d2 @ weight.reshape(f, -1), x_shape)
    return dx, dweight, dbias


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------

def _check_input(params: NetParams, states: np.ndarray) -> np.ndarray:
    states = np.asarray(states, dtype=np.float64)
    if states.ndim == 3:
        states = states[None]
    if states.ndim != 4 or states.shape[1:] != params.config.input_shape:
        raise NetworkConfigError(
            f"Input shape {states.shape} does not match network input "
            f"(B, {', '.join(map(str, params.config.input_shape))})"
        )
    return states


def forward_batch(params: NetParams, states: np.ndarray,
                  keep_cache: bool = False) -> Tuple[NetOutputBatch, Optional[dict]]:
    """
    Run all four heads on a batch of encoded states.

    Args:
        params: parameter snapshot
        states: array (B, planes, size, size) or a single (planes, size, size)
        keep_cache: keep intermediates for backward()

    Returns:
        (outputs, cache) where cache is None unless keep_cache
    """
    cfg = params.config
    p = params.arrays
    x = _check_input(params, states)
    batch = x.shape[0]
    cache = {'x': x}

    if cfg.torso == 'mlp':
        flat = x.reshape(batch, -1)
        h1 = _act(flat @ p['torso.fc1.W'] + p['torso.fc1.b'], cfg.activation)
        h2 = _act(h1 @ p['torso.fc2.W'] + p['torso.fc2.b'], cfg.activation)
        cache.update(flat=flat, h1=h1, h2=h2)
        feat = h2
    else:
        pre, cols = _conv_forward(x, p['torso.stem.W'], p['torso.stem.b'])
        h = _act(pre, cfg.activation)
        cache['stem'] = (cols, x.shape, h)
        for i in range(cfg.blocks):
            pre1, cols1 = _conv_forward(h, p[f'torso.block{i}.conv1.W'], p[f'torso.block{i}.conv1.b'])
            a1 = _act(pre1, cfg.activation)
            pre2, cols2 = _conv_forward(a1, p[f'torso.block{i}.conv2.W'], p[f'torso.block{i}.conv2.b'])
            out = _act(pre2 + h, cfg.activation)
            cache[f'block{i}'] = (cols1, h.shape, a1, cols2, out)
            h = out
        feat = h.reshape(batch, -1)

    cache['feat'] = feat
    logits = feat @ p['policy.W'] + p['policy.b']

    head_out = {}
    for head in SCALAR_HEADS:
        hidden = _act(feat @ p[f'{head}.fc.W'] + p[f'{head}.fc.b'], cfg.activation)
        head_out[head] = (hidden @ p[f'{head}.out.W'] + p[f'{head}.out.b'])[:, 0]
        cache[f'{head}.hidden'] = hidden

    value = np.tanh(head_out['value'])
    regret_pre = head_out['regret']
    outputs = NetOutputBatch(
        logits=logits,
        policy=softmax(logits, axis=1),
        value=value,
        regret_value=np.logaddexp(0.0, regret_pre),
        regret_pre=regret_pre,
        gamma=head_out['rank'],
    )
    cache['value'] = value
    return outputs, (cache if keep_cache else None)


def forward(params: NetParams, states: np.ndarray) -> List[NetOutput]:
    """Per-state NetOutputs for a batch; deterministic given params and inputs."""
    outputs, _ = forward_batch(params, states)
    return outputs.items()


def backward(params: NetParams, cache: dict, dlogits: np.ndarray, dvalue: np.ndarray,
             dregret: np.ndarray, dgamma: np.ndarray,
             regret_pre: np.ndarray) -> Dict[str, np.ndarray]:
    """
    Reverse pass.

    Args:
        dlogits: dL/dlogits, (B, A)
        dvalue: dL/dvalue (post-tanh), (B,)
        dregret: dL/dregret_value (post-softplus), (B,)
        dgamma: dL/dgamma, (B,)
        regret_pre: regret head pre-activation from the forward pass

    Returns:
        Gradient dict keyed like params.arrays
    """
    cfg = params.config
    p = params.arrays
    grads = {}
    feat = cache['feat']

    grads['policy.W'] = feat.T @ dlogits
    grads['policy.b'] = dlogits.sum(axis=0)
    dfeat = dlogits @ p['policy.W'].T

    head_douts = {
        'value': dvalue * (1.0 - cache['value'] ** 2),
        'regret': dregret * expit(regret_pre),
        'rank': dgamma,
    }
    for head in SCALAR_HEADS:
        dout = head_douts[head][:, None]
        hidden = cache[f'{head}.hidden']
        grads[f'{head}.out.W'] = hidden.T @ dout
        grads[f'{head}.out.b'] = dout.sum(axis=0)
        dhidden = (dout @ p[f'{head}.out.W'].T) * _act_grad(hidden, cfg.activation)
        grads[f'{head}.fc.W'] = feat.T @ dhidden
        grads[f'{head}.fc.b'] = dhidden.sum(axis=0)
        dfeat = dfeat + dhidden @ p[f'{head}.fc.W'].T

    if cfg.torso == 'mlp':
        dz2 = dfeat * _act_grad(cache['h2'], cfg.activation)
        grads['torso.fc2.W'] = cache['h1'].T @ dz2
        grads['torso.fc2.b'] = dz2.sum(axis=0)
        dz1 = (dz2 @ p['torso.fc2.W'].T) * _act_grad(cache['h1'], cfg.activation)
        grads['torso.fc1.W'] = cache['flat'].T @ dz1
        grads['torso.fc1.b'] = dz1.sum(axis=0)
    else:
        batch = feat.shape[0]
        dh = dfeat.reshape(batch, cfg.filters, cfg.size, cfg.size)
        for i in reversed(range(cfg.blocks)):
            cols1, h_shape, a1, cols2, out = cache[f'block{i}']
            du = dh * _act_grad(out, cfg.activation)
            da1, dw2, db2 = _conv_backward(du, cols2, a1.shape, p[f'torso.block{i}.conv2.W'])
            dpre1 = da1 * _act_grad(a1, cfg.activation)
            dh_in, dw1, db1 = _conv_backward(dpre1, cols1, h_shape, p[f'torso.block{i}.conv1.W'])
            grads[f'torso.block{i}.conv1.W'], grads[f'torso.block{i}.conv1.b'] = dw1, db1
            grads[f'torso.block{i}.conv2.W'], grads[f'torso.block{i}.conv2.b'] = dw2, db2
            dh = dh_in + du
        cols, x_shape, h0 = cache['stem']
        dpre = dh * _act_grad(h0, cfg.activation)
        _, dws, dbs = _conv_backward(dpre, cols, x_shape, p['torso.stem.W'])
        grads['torso.stem.W'], grads['torso.stem.b'] = dws, dbs

    return {name: grads[name] for name in p}
