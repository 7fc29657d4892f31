"""
Hyperparameter sweeps over the restart-store settings.

One training run per (value, seed); the comparison table holds the final
metrics row of every run.
"""

from pathlib import Path
from typing import List, Optional, Sequence

import pandas as pd

from src.training.run_config import RunConfig
from src.training.trainer import METRICS_FILE, Trainer
from src.utils.config import ConfigurationError, get_config
from src.utils.logger import get_logger

logger = get_logger(__name__)

SWEEP_PARAMS = {
    'lambda': 'restart.buffer_rate',
    'tau': 'restart.temperature',
    'kappa': 'restart.capacity',
    'alpha': 'restart.ema_alpha',
}

COMPARISON_COLUMNS = ['param', 'value', 'seed', 'run_dir', 'iteration', 'loss_total',
                      'loss_rank', 'buffer_size', 'buffer_mean_regret', 'mean_opening_length']


def sweep_values(param: str, values: Optional[Sequence[float]] = None) -> List[float]:
    """Explicit values, or the default grid from training.yaml."""
    if param not in SWEEP_PARAMS:
        raise ConfigurationError(f"Unknown sweep parameter {param!r}, expected one of {sorted(SWEEP_PARAMS)}")
    return list(values) if values else get_config().get_sweep_grid(param)


def run_sweep(base: RunConfig, param: str, values: Optional[Sequence[float]] = None,
              seeds: int = 1, output_root: Optional[Path] = None) -> pd.DataFrame:
    """
    Train one run per (value, seed) and collect their final metrics.

    Every configuration is validated before the first run starts.
    """
    values = sweep_values(param, values)
    key = SWEEP_PARAMS[param]
    root = Path(output_root) if output_root else get_config().get_output_root() / f"sweep_{param}"

    configs = []
    for value in values:
        if param == 'kappa':
            value = int(value)
        for seed in range(seeds):
            run_dir = root / f"{param}_{value}_seed{seed}"
            cfg = base.with_overrides({key: value, 'run.seed': seed, 'run.output_dir': str(run_dir)})
            configs.append((value, seed, cfg.validate()))

    rows = []
    for value, seed, cfg in configs:
        logger.info(f"Sweep {param}={value} seed {seed}")
        run_dir = Trainer(cfg).run()
        metrics = pd.read_csv(run_dir / METRICS_FILE) if (run_dir / METRICS_FILE).exists() else None
        row = {'param': param, 'value': value, 'seed': seed, 'run_dir': str(run_dir)}
        if metrics is not None and len(metrics):
            last = metrics.iloc[-1]
            row.update({c: last[c] for c in COMPARISON_COLUMNS[4:]})
        rows.append(row)

    comparison = pd.DataFrame(rows, columns=COMPARISON_COLUMNS)
    root.mkdir(parents=True, exist_ok=True)
    comparison.to_csv(root / "comparison.csv", index=False)
    logger.info(f"Sweep comparison written to {root / 'comparison.csv'}")
    return comparison
