"""
Model Checkpoints

Each checkpoint directory `{run}/ckpt_{iter}` holds `model.npz` with:
- params: flat parameter vector
- velocity: flat optimizer momentum buffers
- metadata: JSON string (format version, network config, model hash,
  run hash, iteration, method, whether the regret heads were trained)

Loading refuses format-version and model-hash mismatches.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import orjson

from src.models.network import NetConfig, NetParams
from src.utils.logger import get_logger

logger = get_logger(__name__)

CHECKPOINT_VERSION = 1
MODEL_FILE = "model.npz"


class CheckpointError(Exception):
    """Raised when a checkpoint cannot be used with the current configuration."""
    pass


@dataclass
class Checkpoint:
    params: NetParams
    velocity: np.ndarray
    metadata: Dict[str, Any]

    @property
    def iteration(self) -> int:
        return int(self.metadata['iteration'])

    @property
    def method(self) -> str:
        return self.metadata.get('method', 'alphazero')

    @property
    def regret_heads_trained(self) -> bool:
        return bool(self.metadata.get('regret_heads_trained', False))


def checkpoint_dir(run_dir: Path, iteration: int) -> Path:
    return Path(run_dir) / f"ckpt_{iteration}"


def save_checkpoint(directory: Path, params: NetParams, velocity: np.ndarray,
                    metadata: Dict[str, Any]) -> Path:
    """
    Write model.npz into `directory` (created if needed).

    Returns:
        Path to the written file
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = dict(metadata)
    meta['version'] = CHECKPOINT_VERSION
    meta['net_config'] = params.config.to_dict()
    filepath = directory / MODEL_FILE
    np.savez(
        filepath,
        params=params.flat(),
        velocity=np.asarray(velocity, dtype=np.float64),
        metadata=np.array(orjson.dumps(meta, option=orjson.OPT_SORT_KEYS).decode()),
    )
    logger.info(f"Saved checkpoint to {filepath} (iteration {meta.get('iteration')})")
    return filepath


def load_checkpoint(path: Path, expected_model_hash: Optional[str] = None) -> Checkpoint:
    """
    Load a checkpoint directory (or a model.npz path).

    Raises:
        CheckpointError: missing file, unknown version or model-hash mismatch
    """
    path = Path(path)
    filepath = path / MODEL_FILE if path.is_dir() else path
    if not filepath.exists():
        raise CheckpointError(f"Checkpoint not found: {filepath}")

    with np.load(filepath, allow_pickle=False) as data:
        metadata = orjson.loads(str(data['metadata']))
        flat = data['params'].copy()
        velocity = data['velocity'].copy()

    if metadata.get('version') != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"Checkpoint {filepath} has format version {metadata.get('version')}, "
            f"expected {CHECKPOINT_VERSION}"
        )
    if expected_model_hash is not None and metadata.get('model_hash') != expected_model_hash:
        raise CheckpointError(
            f"Checkpoint {filepath} was written for model hash {metadata.get('model_hash')}, "
            f"current configuration has {expected_model_hash}"
        )

    config = NetConfig(**metadata['net_config'])
    params = NetParams.from_flat(config, flat)
    logger.debug(f"Loaded checkpoint {filepath} (iteration {metadata.get('iteration')})")
    return Checkpoint(params=params, velocity=velocity, metadata=metadata)
