"""
Static figures from the CSV outputs. Rendering uses the Agg backend only.
"""

from pathlib import Path

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from src.utils.logger import get_logger  # noqa: E402

logger = get_logger(__name__)

LOSS_COLUMNS = ['loss_total', 'loss_policy', 'loss_value', 'loss_regret', 'loss_rank']


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    logger.info(f"Figure written to {path}")
    return path


def plot_losses(metrics: pd.DataFrame, path: Path) -> Path:
    """Per-head training loss against iteration."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for column in LOSS_COLUMNS:
        if column in metrics and metrics[column].notna().any():
            ax.plot(metrics['iteration'], metrics[column], label=column.replace('loss_', ''))
    ax.set_xlabel('iteration')
    ax.set_ylabel('loss')
    ax.legend()
    return _save(fig, path)


def plot_toy_curves(aggregate: pd.DataFrame, path: Path) -> Path:
    """Mean reward and root Q-distance per strategy with 95% bands, one column per tree depth."""
    levels = sorted(aggregate['levels'].unique())
    fig, axes = plt.subplots(2, len(levels), figsize=(5 * len(levels), 7), squeeze=False)
    for col, level in enumerate(levels):
        subset = aggregate[aggregate['levels'] == level]
        for strategy, curve in subset.groupby('strategy', sort=True):
            for row, metric in enumerate(('reward', 'q_distance')):
                ax = axes[row, col]
                ax.plot(curve['iteration'], curve[f'{metric}_mean'], label=strategy)
                ax.fill_between(curve['iteration'], curve[f'{metric}_low'],
                                curve[f'{metric}_high'], alpha=0.2)
                ax.set_title(f'{level}-level tree')
                ax.set_xlabel('iteration')
                ax.set_ylabel('mean reward' if metric == 'reward' else '|Q_root - Q*_root|')
        axes[0, col].legend()
    return _save(fig, path)


def plot_regret_shift(histogram: pd.DataFrame, path: Path) -> Path:
    """First-entry versus final regret of evicted buffer entries."""
    fig, ax = plt.subplots(figsize=(7, 4))
    width = (histogram['bin_high'] - histogram['bin_low']).iloc[0]
    ax.bar(histogram['bin_low'], histogram['first_count'], width=width, align='edge',
           alpha=0.5, label='first entry')
    ax.bar(histogram['bin_low'], histogram['final_count'], width=width, align='edge',
           alpha=0.5, label='at eviction')
    ax.set_xlabel('regret')
    ax.set_ylabel('entries')
    ax.legend()
    return _save(fig, path)


def plot_opening_lengths(proportions: pd.DataFrame, path: Path) -> Path:
    """Stacked share of stored openings per length bucket over iterations."""
    table = proportions.pivot(index='iteration', columns='bucket_low', values='proportion')
    fig, ax = plt.subplots(figsize=(7, 4))
    bottom = None
    for bucket in table.columns:
        values = table[bucket].fillna(0.0)
        high = proportions.loc[proportions['bucket_low'] == bucket, 'bucket_high'].iloc[0]
        ax.bar(table.index, values, bottom=bottom, label=f'{bucket}-{high}')
        bottom = values if bottom is None else bottom + values
    ax.set_xlabel('iteration')
    ax.set_ylabel('proportion of openings')
    ax.legend(title='moves played', fontsize='small', ncol=2)
    return _save(fig, path)
