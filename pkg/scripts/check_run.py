"""
Training Run Status

Quick overview of a run directory: progress, latest losses, restart-store
statistics and evaluation results.

Usage:
    python scripts/check_run.py runs/rgsc_seed0
"""

import sys
from pathlib import Path

import pandas as pd
import yaml

# Add project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.evaluation.analysis import load_buffer_snapshots
from src.training.trainer import EVALUATIONS_FILE, GAMES_FILE, METRICS_FILE


def section(title):
    print(title)
    print("-" * 70)


def main():
    if len(sys.argv) != 2:
        print("Usage: python scripts/check_run.py <run_dir>")
        return 2
    run_dir = Path(sys.argv[1])

    print("\n" + "=" * 70)
    print(f"RUN STATUS: {run_dir}")
    print("=" * 70 + "\n")

    config_path = run_dir / "config.yaml"
    if not config_path.exists():
        print("No config.yaml found. Is this a run directory?")
        return 1
    with open(config_path) as f:
        cfg = yaml.safe_load(f)

    run = cfg['run']
    section("CONFIGURATION")
    print(f"Method:     {run['method']}")
    print(f"Game:       {cfg['game']['name']} {cfg['game']['size']}x{cfg['game']['size']}")
    print(f"Seed:       {run['seed']}")
    print(f"Iterations: {run['iterations']}")
    print()

    ckpts = sorted(run_dir.glob("ckpt_*"), key=lambda p: int(p.name.split('_')[1]))
    section("CHECKPOINTS")
    print(f"Saved: {len(ckpts)}")
    if ckpts:
        print(f"Latest: {ckpts[-1].name}")
    print()

    metrics_path = run_dir / METRICS_FILE
    if not metrics_path.exists():
        print("No iterations completed yet.")
        return 0

    metrics = pd.read_csv(metrics_path)
    last = metrics.iloc[-1]
    section("LATEST ITERATION")
    print(f"Iteration:        {int(last['iteration'])} / {run['iterations']}")
    print(f"Games:            {int(last['games'])}")
    print(f"Mean game length: {last['mean_game_length']:.1f}")
    for col in ['loss_total', 'loss_policy', 'loss_value', 'loss_regret', 'loss_rank']:
        if pd.notna(last[col]):
            print(f"{col + ':':<18}{last[col]:.4f}")
    print()

    if pd.notna(last['buffer_size']):
        section("RESTART STORE")
        print(f"Entries:          {int(last['buffer_size'])}")
        print(f"Openings drawn:   {int(last['buffer_openings'])}")
        if pd.notna(last['buffer_mean_regret']):
            print(f"Mean regret:      {last['buffer_mean_regret']:.4f}")
            print(f"Evictions:        {int(last['evictions'])}")
        print(f"Opening length:   {last['mean_opening_length']:.2f}")
        snapshots = load_buffer_snapshots(run_dir)
        print(f"Snapshots:        {len(snapshots)}")
        print()

    evals_path = run_dir / EVALUATIONS_FILE
    if evals_path.exists():
        section("EVALUATIONS")
        print(pd.read_csv(evals_path).tail(5).to_string(index=False))
        print()

    games_path = run_dir / GAMES_FILE
    if games_path.exists():
        size_mb = games_path.stat().st_size / (1024 * 1024)
        print(f"Game log: {games_path.name} ({size_mb:.1f} MB)")

    print("\n" + "=" * 70 + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
